# src/api/main.py

import logging
from datetime import datetime

from fastapi import Body, FastAPI, HTTPException
from fastapi.concurrency import run_in_threadpool
from fastapi.middleware.cors import CORSMiddleware

from src.api import jobs, schemas
from src.core.settings import configure_logging

configure_logging()

logger = logging.getLogger("ergodic_workbench_api")

# Create FastAPI app instance
app = FastAPI(
    title="Ergodic Rates Workbench API",
    description="Runs bounded ergodic-rate experiments and returns their reports.",
    version="1.0.0",
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost", "http://localhost:8080"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# --- API Routes ---

@app.get("/")
async def read_root():
    return {"message": "Ergodic Rates Workbench API"}


@app.get("/health", response_model=schemas.HealthResponse, tags=["Status"])
async def health_check():
    """Check the health of the API."""
    return {"status": "healthy", "timestamp": datetime.now().isoformat()}

# --- V1 API Routes ---
api_v1_prefix = "/api/v1"


@app.get(f"{api_v1_prefix}/commands", response_model=schemas.CommandListResponse, tags=["Experiments"])
async def list_commands():
    return {"commands": list(schemas.COMMANDS)}


@app.post(f"{api_v1_prefix}/run/{{command}}", response_model=schemas.RunResponse, tags=["Experiments"])
async def run_command(command: str, config: schemas.ExperimentConfig = Body(...)):
    """
    Run one experiment.

    Validation problems answer 422; a run that exhausted its digit budget or
    search cap answers 200 with status "partial" and the partial report.
    """
    if command not in schemas.COMMANDS:
        raise HTTPException(status_code=404, detail=f"Unknown command: {command}")
    if config.command is not None and config.command != command:
        raise HTTPException(status_code=422, detail=f"Config is for {config.command}, not {command}")
    config = config.model_copy(update={"command": command, "output": None})

    logger.info(f"Received {command} request")
    result = await run_in_threadpool(jobs.run_job, config)

    if result.exit_code == jobs.EXIT_VALIDATION:
        raise HTTPException(status_code=422, detail=result.report.get("error", "Invalid experiment"))
    if result.exit_code == jobs.EXIT_FAILURE:
        raise HTTPException(status_code=500, detail="Experiment failed; see the service log.")
    return {"command": command, "status": result.status, "exit_code": result.exit_code,
            "report": jobs.sanitize(result.report)}


logger.info("FastAPI application configured and ready.")
