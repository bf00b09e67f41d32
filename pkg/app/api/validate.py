from fastapi import APIRouter
from app.models.schemas import ConfigIn, ValidateOut
from app.services.harness import validate as validate_config

router = APIRouter(prefix="/validate", tags=["validate"])

@router.post("", response_model=ValidateOut)
def validate(body: ConfigIn):
    return validate_config(body.config)
