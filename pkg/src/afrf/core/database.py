import uuid
from typing import Iterator, Optional

from sqlalchemy import create_engine, select
from sqlalchemy.orm import sessionmaker

from src.afrf.core.models import Base, BenchmarkCellRecord

CellKey = tuple[str, str, str, int, int, int]


class ResultStore:
    """SQLite store of finished benchmark cells, used to resume interrupted sweeps."""

    def __init__(self, db_path: Optional[str] = None):
        """
        db_path: file path of the database, e.g. 'results/bench.db'.
        None or empty gives a private in-memory database.
        """
        if not db_path:
            url = f"sqlite:///file:{uuid.uuid4().hex}?mode=memory&cache=shared&uri=true"
        else:
            url = f"sqlite:///{db_path}"
        self.engine = create_engine(url, connect_args={"check_same_thread": False})
        Base.metadata.create_all(self.engine)
        self.Session = sessionmaker(bind=self.engine)

    @staticmethod
    def key_of(record: BenchmarkCellRecord) -> CellKey:
        return (
            record.dataset,
            record.method,
            record.features,
            record.forest_size,
            record.k,
            record.replicate,
        )

    def get(self, key: CellKey) -> Optional[BenchmarkCellRecord]:
        dataset, method, features, forest_size, k, replicate = key
        with self.Session() as session:
            return session.scalar(
                select(BenchmarkCellRecord).filter_by(
                    dataset=dataset,
                    method=method,
                    features=features,
                    forest_size=forest_size,
                    k=k,
                    replicate=replicate,
                )
            )

    def __contains__(self, key: CellKey) -> bool:
        return self.get(key) is not None

    def put(self, **fields) -> BenchmarkCellRecord:
        """Insert a cell unless one with the same key exists; returns the stored cell."""
        record = BenchmarkCellRecord(**fields)
        existing = self.get(self.key_of(record))
        if existing is not None:
            return existing
        with self.Session() as session:
            session.add(record)
            session.commit()
            session.refresh(record)
            session.expunge(record)
        return record

    def __iter__(self) -> Iterator[BenchmarkCellRecord]:
        with self.Session() as session:
            rows = session.scalars(select(BenchmarkCellRecord).order_by(BenchmarkCellRecord.id)).all()
            for row in rows:
                session.expunge(row)
            return iter(rows)

    def __len__(self) -> int:
        return len(list(iter(self)))

    def clear(self):
        with self.Session() as session:
            session.query(BenchmarkCellRecord).delete()
            session.commit()

    def close(self):
        self.engine.dispose()
