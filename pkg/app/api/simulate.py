from fastapi import APIRouter
from app.models.schemas import ConfigIn, RunSummary
from app.services.harness import parse_config, run_simulate

router = APIRouter(prefix="/simulate", tags=["simulate"])

@router.post("", response_model=RunSummary)
def simulate(body: ConfigIn):
    # one run per request, in-process
    return run_simulate(parse_config(body.config), body.output_dir)
