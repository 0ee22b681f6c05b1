"""scikit-learn style facade over the planning and execution pipeline.

``fit`` takes the client records. ``transform`` maps structured queries to
their operator-count vectors; ``predict`` executes them.
"""

from __future__ import annotations

import random
from typing import Any, Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .crypto import keygen, mock_keygen
from .dag import FaDag
from .engine import execute, make_pool
from .metrics import COLUMNS, count_ops
from .optimizer import naive_plan, optimize
from .planner.backends import IrBackend
from .planner.ir import QueryIR, ir_from_dict, parse_ir
from .planner.templates import DEFAULT_EPSILON
from .schema import Schema
from .synth import bundled_schema


class FederatedQueryPlanner(TransformerMixin, BaseEstimator):
    """Plan and run aggregate queries over a pool of clients.

    Parameters
    ----------
    schema : str or Schema
        Bundled schema name or a loaded :class:`Schema`.
    use_optimizer : bool
        Merge and partition the preliminary DAGs before execution.
    epsilon : float
        Per-NoiseAdd privacy budget.
    noise : bool
        Add Laplace noise when executing.
    key_bits : int or None
        Paillier modulus size; None uses the identity scheme.
    seed : int
        Seed for noise, encryption and key generation.
    """

    def __init__(self, schema: str | Schema = "adult_pii", use_optimizer: bool = True,
                 epsilon: float = DEFAULT_EPSILON, noise: bool = False, key_bits: int | None = None,
                 seed: int = 0):
        self.schema = schema
        self.use_optimizer = use_optimizer
        self.epsilon = epsilon
        self.noise = noise
        self.key_bits = key_bits
        self.seed = seed

    def _schema(self) -> Schema:
        return self.schema if isinstance(self.schema, Schema) else bundled_schema(self.schema)

    def fit(self, X: Iterable[Mapping[str, Any]] | Any, y=None) -> "FederatedQueryPlanner":
        schema = self._schema()
        if hasattr(X, "to_dict"):
            rows = X.to_dict("records")
        elif isinstance(X, np.ndarray):
            rows = [dict(zip(schema.names(), r)) for r in X]
        else:
            rows = [dict(r) for r in X]
        self.schema_ = schema
        self.pool_ = make_pool(rows, schema)
        self.keys_ = (mock_keygen() if self.key_bits is None
                      else keygen(self.key_bits, random.Random(f"keys:{self.seed}")))
        self.n_clients_ = self.pool_.n
        return self

    def _ir(self, query) -> QueryIR:
        if isinstance(query, QueryIR):
            return query
        if isinstance(query, str):
            return parse_ir(query, self.schema_)
        return ir_from_dict(getattr(query, "ir", query), self.schema_)

    def plan(self, query) -> FaDag:
        check_is_fitted(self, "pool_")
        ir, dags = IrBackend().plan(self._ir(query), self.schema_, epsilon=self.epsilon)
        return optimize(dags, ir, self.schema_)[0] if self.use_optimizer else naive_plan(dags, ir)

    def transform(self, X: Iterable) -> np.ndarray:
        """Average per-client operator counts, one row per query."""
        check_is_fitted(self, "pool_")
        rows = [[float(v) for v in count_ops(self.plan(q), self.pool_).as_tuple()] for q in X]
        return np.asarray(rows, dtype=float).reshape(-1, len(COLUMNS) - 1)

    def predict(self, X: Iterable) -> list[dict[str, float | None]]:
        """Released answers per query, keyed by answer name."""
        check_is_fitted(self, "pool_")
        out = []
        for q in X:
            res = execute(self.plan(q), self.pool_, self.keys_, rng=self.seed, noise_enabled=self.noise)
            out.append({k: None if v is None else float(v) for k, v in sorted(res.by_base().items())})
        return out

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        return np.asarray([c.lower() for c in COLUMNS[1:]], dtype=object)
