import sys
import os
import logging

from dotenv import load_dotenv

load_dotenv()

# Set up logging
logging.basicConfig(level=os.environ.get("LOG_LEVEL", "INFO").upper())
logger = logging.getLogger(__name__)

# Add current directory to path so we can import app
sys.path.append(os.getcwd())

try:
    from app import pipeline
    from app.config import load_pipeline_config
    from app.errors import WeakRankError
except ImportError as e:
    logger.error(f"Error importing app modules: {e}")
    logger.error("Make sure you are running this script from the repository root.")
    sys.exit(1)


def run_pipeline(config_path=None, synth=False):
    config_path = config_path or os.environ.get("WEAKRANK_CONFIG")
    if not config_path:
        logger.warning("No config given and WEAKRANK_CONFIG is not set. Using defaults in the current directory.")
    else:
        logger.info(f"Using pipeline config {config_path}")

    try:
        config = load_pipeline_config(config_path)
        report = pipeline.run_all(config, synth=synth)
    except WeakRankError as e:
        logger.error(f"Pipeline failed: {e}")
        sys.exit(1)
    print(pipeline.report_summary(report))


if __name__ == "__main__":
    args = [a for a in sys.argv[1:] if a != "--synth"]
    run_pipeline(args[0] if args else None, synth="--synth" in sys.argv[1:])
