import logging
from pathlib import Path

from fastapi import APIRouter, HTTPException

from ratchet.config import settings
from ratchet.exceptions import AcceptanceError, ConfigError, RatchetError
from ratchet.schemas.experiment import ExperimentConfig, Manifest
from ratchet.services.runner import run_experiment

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/experiments", tags=["experiments"])


@router.post(
    "",
    response_model=Manifest,
    description="Run one experiment synchronously and return its manifest",
)
def create_experiment(config: ExperimentConfig):
    """
    Runs the experiment into `out_dir`, which must lie inside the configured
    results directory.

    - **400**: configuration error
    - **409**: compare run below its acceptance thresholds
    - **500**: runtime or numeric error
    """
    root = Path(settings.out_dir).resolve()
    target = Path(config.out_dir).resolve()
    if target != root and root not in target.parents:
        raise HTTPException(status_code=400, detail=f"out_dir must lie inside {settings.out_dir}")

    try:
        return run_experiment(config)
    except ConfigError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except AcceptanceError as e:
        raise HTTPException(status_code=409, detail=f"Acceptance threshold missed: {e}")
    except RatchetError as e:
        logger.error(f"Experiment {config.experiment.value} failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))
