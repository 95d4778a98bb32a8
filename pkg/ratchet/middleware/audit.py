import logging
import time

from starlette.middleware.base import BaseHTTPMiddleware
from starlette.requests import Request

logger = logging.getLogger(__name__)


class AuditMiddleware(BaseHTTPMiddleware):
    """
    Middleware to log every API request with its status and response time
    """

    # Paths to exclude from audit logging (docs)
    EXCLUDED_PATHS = {"/docs", "/redoc", "/openapi.json"}

    async def dispatch(self, request: Request, call_next):
        if request.url.path in self.EXCLUDED_PATHS:
            return await call_next(request)

        start_time = time.perf_counter()
        status_code = 500

        try:
            response = await call_next(request)
            status_code = response.status_code
            response.headers["X-Response-Time-Ms"] = f"{(time.perf_counter() - start_time) * 1000:.2f}"
            return response

        except Exception as e:
            logger.error(f"Error processing request {request.url.path}: {e}")
            raise

        finally:
            response_time_ms = (time.perf_counter() - start_time) * 1000
            query = f"?{request.url.query}" if request.url.query else ""
            logger.info(
                f"{request.method} {request.url.path}{query} - "
                f"Status: {status_code} - "
                f"Time: {response_time_ms:.2f}ms"
            )
