from src.tasks.recovery_task import RecoveryStats, RecoveryTask, verify_ground_truth_recovery
