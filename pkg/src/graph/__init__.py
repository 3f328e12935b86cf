from src.graph.interaction_graph import (BipartiteGraph, DegreeHistogram, build_graph, user_degree,
                                         degree_histogram, user_node, device_node, USER, DEVICE)
from src.graph.ego_subgraphs import (EgoSubgraph, EgoSubgraphMetrics, SubgraphMetricCalculator, ego_subgraph,
                                     metrics, subgraph_feature_block, subgraph_block_frame, subgraph_histograms,
                                     subgraph_column_names, MAX_ORDER, METRIC_NAMES)
