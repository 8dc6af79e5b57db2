"""
Error mapping shared by the routers.
"""

from fastapi import HTTPException
from pydantic import ValidationError

from services.errors import IsoprofileError


def raise_http(operation: str, e: Exception):
    """Workbench errors become 422 with the structured payload; anything else is a 500."""
    if isinstance(e, HTTPException):
        raise e
    if isinstance(e, IsoprofileError):
        raise HTTPException(status_code=422, detail=e.to_dict()) from e
    if isinstance(e, ValidationError):
        raise HTTPException(status_code=500, detail=f"Configuration error: {str(e)}") from e
    raise HTTPException(status_code=500, detail=f"{operation} failed: {str(e)}") from e
