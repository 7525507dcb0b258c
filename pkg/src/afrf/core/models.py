from sqlalchemy import Column, Float, Integer, String, UniqueConstraint
from sqlalchemy.orm import declarative_base

Base = declarative_base()


class BenchmarkCellRecord(Base):
    """One scored (dataset, method, features, forest size, K, replicate) cell of a benchmark sweep."""

    __tablename__ = "benchmark_cells"
    __table_args__ = (
        UniqueConstraint("dataset", "method", "features", "forest_size", "k", "replicate", name="uq_cell"),
    )

    id = Column(Integer, primary_key=True, autoincrement=True)
    dataset = Column(String, nullable=False, index=True)
    method = Column(String, nullable=False)
    features = Column(String, nullable=False)
    forest_size = Column(Integer, nullable=False)
    k = Column(Integer, nullable=False)
    replicate = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    accuracy = Column(Float, nullable=False)
    n_train = Column(Integer, nullable=False)
    n_test = Column(Integer, nullable=False)
