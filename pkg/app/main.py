from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import ORJSONResponse
from app.core.config import get_settings
from app.core.errors import ThermoplastError
from app.api.health import router as health_router
from app.api.validate import router as validate_router
from app.api.simulate import router as simulate_router

_STATUS = {"config-invalid": 422, "solver-failure": 500, "not-converged": 409}

def create_app() -> FastAPI:
    s = get_settings()
    app = FastAPI(title=s.APP_NAME, version=s.APP_VERSION, default_response_class=ORJSONResponse)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"], allow_credentials=True, allow_methods=["*"], allow_headers=["*"]
    )
    app.include_router(health_router)
    app.include_router(validate_router)
    app.include_router(simulate_router)

    @app.exception_handler(ThermoplastError)
    def _thermoplast_error(request: Request, exc: ThermoplastError):
        return ORJSONResponse(status_code=_STATUS.get(exc.reason, 500), content=exc.payload())

    return app

app = create_app()
