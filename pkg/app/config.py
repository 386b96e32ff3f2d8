import os


class Config:
    """Base configuration class."""
    # Get base directory (project root)
    basedir = os.path.abspath(os.path.dirname(os.path.dirname(__file__)))

    # Run directories are created under this root, one per config hash
    RUN_ROOT = os.environ.get('COMMENTBENCH_RUN_ROOT') or os.path.join(basedir, 'runs')
    LOG_DIR = os.path.join(basedir, 'logs')

    # Submission score constants
    SCORE_F1_WEIGHT = 0.6
    SCORE_RUNTIME_WEIGHT = 0.2
    SCORE_GFLOPS_WEIGHT = 0.2
    SCORE_RUNTIME_BUDGET_S = 5.0
    SCORE_GFLOPS_BUDGET = 5000.0

    # Head defaults where the published sweeps are silent
    DEFAULT_N_TREES = 100
    DEFAULT_BOOSTING_ROUNDS = 100
    DEFAULT_SHRINKAGE = 0.1
    DEFAULT_THRESHOLD = 0.5
    DEFAULT_NB_ALPHA = 1.0

    # Runtime measurement protocol
    MEASUREMENT_WARMUP = 1
    MEASUREMENT_REPETITIONS = 5
    MEASUREMENT_AGGREGATION = 'median'

    GRID_WORKERS = 4


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    DEVELOPMENT = True


class TestingConfig(Config):
    """Test configuration: short measurement protocol, small grid pool."""
    DEBUG = False
    TESTING = True
    MEASUREMENT_WARMUP = 0
    MEASUREMENT_REPETITIONS = 3
    GRID_WORKERS = 2


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False
    DEVELOPMENT = False
    MEASUREMENT_WARMUP = 2
    MEASUREMENT_REPETITIONS = 10


# Configuration mapping
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}
