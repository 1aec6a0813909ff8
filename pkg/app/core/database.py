from contextlib import contextmanager
from typing import Iterator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, sessionmaker

from app.core.config import settings

_engine: Optional[Engine] = None

# Create session factory (bound once the engine exists)
SessionLocal = sessionmaker(autocommit=False, autoflush=False)


def get_engine(url: Optional[str] = None) -> Engine:
    """Create the ledger engine on first use; sqlite needs no server."""
    global _engine
    if url is not None or _engine is None:
        _engine = create_engine(
            url or settings.DATABASE_URL,
            pool_pre_ping=True,
            echo=settings.DEBUG,  # Log SQL queries in debug mode
        )
        SessionLocal.configure(bind=_engine)
    return _engine


def init_db(url: Optional[str] = None) -> Engine:
    """Create the ledger tables if they do not exist yet."""
    from app.models import Base

    engine = get_engine(url)
    Base.metadata.create_all(bind=engine)
    return engine


@contextmanager
def get_db() -> Iterator[Session]:
    """
    Session scope for the ledger.

    Usage:
        with get_db() as db:
            ExperimentRepository(db).list_recent()
    """
    get_engine()
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
