#!/usr/bin/env python3
"""
Command-line entry point for the comment classification benchmark.

    python run.py run --config experiment.ini
    python run.py score --f1 0.6394 --runtime 0.9422 --gflops 999.0271

Use this rather than ``flask run``: the flask command keeps its own
development-server ``run`` command in front of the benchmark one.
"""
import sys

from flask.cli import ScriptInfo

from app import create_app

# Create application instance
app = create_app()

if __name__ == '__main__':
    sys.exit(app.cli.main(args=sys.argv[1:], prog_name='commentbench',
                          obj=ScriptInfo(create_app=lambda: app)))
