"""
Isoprofile API - Isoperimetric Profile Workbench

FastAPI backend providing:
- Level graph validation and exact weights
- Singular surface assembly and pipe-clearing coverage
- Surfaces of revolution, prescribed caps and profile tools
- Conformal blow-up solver and vanishing-profile bands
- Competitor search oracle and the property suite
"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from dotenv import load_dotenv

from routers import conformal, graph, oracle, revolution, surface
from services.settings import get_settings

load_dotenv()

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Manage application lifecycle."""
    # Startup: fail early on a bad environment
    settings = get_settings()
    logger.info(f"Isoprofile API starting with {settings.threads} threads, output in {settings.output_dir}")
    yield


app = FastAPI(
    title="Isoprofile API",
    description="Isoperimetric profile workbench - level graphs, singular surfaces, revolution caps, conformal blow-up and oracles",
    version="0.1.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:5173", "http://localhost:3000"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(graph.router)
app.include_router(surface.router)
app.include_router(revolution.router)
app.include_router(conformal.router)
app.include_router(oracle.router)


@app.get("/")
async def root():
    """API root - basic info."""
    return {
        "name": "Isoprofile API",
        "version": "0.1.0",
        "description": "Isoperimetric profile workbench",
        "endpoints": {
            "graph": "POST /api/graph/validate",
            "assemble": "POST /api/surface/assemble",
            "coverage": "POST /api/surface/coverage",
            "profile": "POST /api/rev/profile",
            "cap": "POST /api/rev/cap",
            "stability": "POST /api/rev/stability",
            "conformal": "POST /api/conformal/solve",
            "vanishing": "POST /api/conformal/vanishing",
            "search": "POST /api/oracle/search",
            "flux": "/api/oracle/flux?r={radius}",
            "verify": "POST /api/verify",
        }
    }


@app.get("/health")
async def health():
    """Health check endpoint."""
    try:
        settings = get_settings()
        config_status = "ok"
        threads = settings.threads
    except Exception as e:
        config_status = f"error: {str(e)}"
        threads = None

    return {
        "status": "healthy",
        "config": config_status,
        "threads": threads,
    }
