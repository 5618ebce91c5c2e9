import hmac
import logging

from fastapi import Depends, HTTPException
from fastapi.security import HTTPAuthorizationCredentials, HTTPBearer

from app.config import settings

logger = logging.getLogger(__name__)

security = HTTPBearer()


async def verify_admin_token(
    credentials: HTTPAuthorizationCredentials = Depends(security),
):
    """Bearer guard for routes that start fits"""
    if not hmac.compare_digest(credentials.credentials, settings.ADMIN_BEARER_TOKEN):
        logger.warning("Rejected admin request with an invalid token")
        raise HTTPException(status_code=401, detail="Invalid admin token")
    return credentials.credentials
