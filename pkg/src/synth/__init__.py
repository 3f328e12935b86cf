from src.synth.corpus_generator import (CorpusGenerator, GeneratedCorpus, GroundTruth, ScenarioKind, ScenarioSpec,
                                        generate_corpus, parse_scenario)
