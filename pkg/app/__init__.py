import os

from flask import Flask

from app.logging_config import setup_logging


def create_app(config_name=None):
    """Application factory pattern."""
    if config_name is None:
        config_name = os.environ.get('FLASK_ENV', 'development')

    app = Flask(__name__)

    # Load configuration
    from app.config import config
    app.config.from_object(config[config_name])

    # Setup logging
    setup_logging(app)

    # Benchmark commands: flask ingest | split | pairs | train | run | grid | evaluate | score | ...
    from app.commands import register_commands
    register_commands(app)

    return app
