from .logger import get_logger, attach_run_log, detach_run_log

__all__ = ["get_logger", "attach_run_log", "detach_run_log"]
