from .app import ServeSettings, create_app

__all__ = ["ServeSettings", "create_app"]
