from src.ingest.records import (FileKind, LogonActivity, DeviceActivity, LogonEvent, DeviceEvent, FileEvent,
                                HttpEvent, PsychometricRecord, RosterRecord, IngestStats, UserId, DeviceId)
from src.ingest.cert_parser import (parse_events, iter_file, load_roster, filter_by_department,
                                    department_members, corpus_summary, summary_table, write_events, CertCsvWriter,
                                    FilterStats)
