"""Transfer-time estimation: Edelbaum approximation plus a learned correction."""

import copy
import csv
import functools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .astro import RingConfig, edelbaum_delta_v, plane_angle
from .batch import BatchRunner
from .constants import AU, DAY, GAMMA
from .exceptions import (
    DatabaseQualityError,
    ParseError,
    PreconditionError,
    TrainingFailedError,
    ValidationError,
)
from .lowthrust import OcpOptions, TransferSolution, solve_phase_free
from .population import Asteroid, Population
from .result import Ok

logger = logging.getLogger(__name__)

MODEL_FORMAT = "dyson-ring-mlp/1"
DB_HEADER = [
    "ast_id",
    "a_st",
    "a_ast",
    "e_ast",
    "i_ast",
    "argp_ast",
    "i_st",
    "raan_ast",
    "raan_st",
    "t_hat",
    "t_star",
]


@dataclass(frozen=True)
class EdelbaumInput:
    """Features of one asteroid-to-ring transfer (SI units, radians).

    When both ``raan_ast`` and ``raan_st`` are given the plane change is the
    angle between the two orbit normals, otherwise |i_st - i_ast|.
    """

    a_st: float
    a_ast: float
    e_ast: float
    i_ast: float
    argp_ast: float
    i_st: float = 0.0
    raan_ast: Optional[float] = None
    raan_st: Optional[float] = None

    def __post_init__(self):
        if not (self.a_st > 0.0 and self.a_ast > 0.0):
            raise ValidationError(
                "Radii must be positive", a_st=self.a_st, a_ast=self.a_ast
            )

    @property
    def delta_i(self) -> float:
        if self.raan_ast is not None and self.raan_st is not None:
            return plane_angle(self.i_ast, self.raan_ast, self.i_st, self.raan_st)
        return abs(self.i_st - self.i_ast)

    def features(self) -> np.ndarray:
        """[a_st (AU), a_ast (AU), delta_i, e_ast, argp_ast]."""
        return np.array(
            [self.a_st / AU, self.a_ast / AU, self.delta_i, self.e_ast, self.argp_ast]
        )

    @classmethod
    def for_asteroid(
        cls,
        ast: Asteroid,
        a_st: float,
        i_st: float = 0.0,
        raan_st: Optional[float] = None,
    ) -> "EdelbaumInput":
        return cls(
            a_st=a_st,
            a_ast=ast.el.a,
            e_ast=ast.el.e,
            i_ast=ast.el.i,
            argp_ast=ast.el.argp,
            i_st=i_st,
            raan_ast=ast.el.raan if raan_st is not None else None,
            raan_st=raan_st,
        )


def edelbaum_time(inp: EdelbaumInput) -> float:
    """Edelbaum delta-v divided by the ATD acceleration (seconds)."""
    return edelbaum_delta_v(inp.a_ast, inp.a_st, inp.delta_i) / GAMMA


@dataclass
class TrainingSample:
    features: EdelbaumInput
    t_hat: float
    t_star: float
    ast_id: int = 0

    def __post_init__(self):
        if not self.t_star > 0.0:
            raise ValidationError("Optimal time must be positive", t_star=self.t_star)

    @property
    def label(self) -> float:
        return self.t_star - self.t_hat


# ----------------------------------------------------------------------------
# Regressor
# ----------------------------------------------------------------------------


@dataclass
class TrainingReport:
    epochs: int
    train_mse: float
    test_mse: float
    test_mae_corrected: float
    test_mae_uncorrected: float
    history: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None

    @property
    def improvement(self) -> float:
        """Relative reduction of held-out mean absolute error."""
        if self.test_mae_uncorrected == 0.0:
            return 0.0
        return 1.0 - self.test_mae_corrected / self.test_mae_uncorrected

    def to_dict(self) -> Dict:
        return {
            "epochs": self.epochs,
            "train_mse": self.train_mse,
            "test_mse": self.test_mse,
            "test_mae_corrected_days": self.test_mae_corrected / DAY,
            "test_mae_uncorrected_days": self.test_mae_uncorrected / DAY,
            "improvement": self.improvement,
            "best_epoch": self.best_epoch,
        }


@dataclass
class RegressorModel:
    """Fully connected ReLU network predicting the Edelbaum error (seconds).

    Inputs are standardized with ``x_mean``/``x_std`` and the output is
    de-standardized with ``y_mean``/``y_std``.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    report: Optional[TrainingReport] = field(default=None, compare=False)

    @property
    def layer_widths(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @classmethod
    def initialize(
        cls,
        n_in: int,
        hidden: Sequence[int],
        rng: np.random.Generator,
    ) -> "RegressorModel":
        widths = [n_in] + list(hidden) + [1]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, np.zeros(n_in), np.ones(n_in))

    @classmethod
    def zeros(
        cls, n_in: int = 5, hidden: Sequence[int] = (50,) * 5
    ) -> "RegressorModel":
        widths = [n_in] + list(hidden) + [1]
        return cls(
            [np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])],
            [np.zeros(b) for b in widths[1:]],
            np.zeros(n_in),
            np.ones(n_in),
        )

    def _forward(self, Z: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        acts = [Z]
        h = Z
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if k < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h[:, 0], acts

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out, _ = self._forward((X - self.x_mean) / self.x_std)
        return out * self.y_std + self.y_mean

    def __call__(self, inp: EdelbaumInput) -> float:
        return float(self.predict(inp.features()[None, :])[0])

    def copy(self) -> "RegressorModel":
        return copy.deepcopy(self)

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> Dict:
        return {
            "format": MODEL_FORMAT,
            "layer_widths": self.layer_widths,
            "activation": "relu",
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "layers": [
                {
                    "shape": list(W.shape),
                    "weights": W.ravel().tolist(),
                    "bias": b.tolist(),
                }
                for W, b in zip(self.weights, self.biases)
            ],
            "report": self.report.to_dict() if self.report else None,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "RegressorModel":
        if data.get("format") != MODEL_FORMAT:
            raise ParseError(f"Unsupported model format: {data.get('format')!r}")
        try:
            weights = [
                np.array(layer["weights"], dtype=float).reshape(layer["shape"])
                for layer in data["layers"]
            ]
            biases = [np.array(layer["bias"], dtype=float) for layer in data["layers"]]
            return cls(
                weights,
                biases,
                np.array(data["x_mean"], dtype=float),
                np.array(data["x_std"], dtype=float),
                float(data["y_mean"]),
                float(data["y_std"]),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise ParseError(f"Malformed model file: {e}")

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RegressorModel":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ParseError(
                f"Model file is not valid JSON: {e.msg}", line=e.lineno, path=str(path)
            )
        return cls.from_dict(data)


def _standardize(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    return mean, std


def train_correction(
    db: Sequence[TrainingSample],
    epochs: int = 200,
    seed: int = 0,
    learning_rate: float = 1e-3,
    batch_size: int = 64,
    momentum: float = 0.9,
    hidden: Sequence[int] = (50,) * 5,
    test_fraction: float = 0.2,
    min_samples: int = 100,
    patience: Optional[int] = None,
) -> RegressorModel:
    """Fit the Edelbaum error with minibatch SGD and momentum on the MSE.

    A random ``test_fraction`` of the database is held out; the returned
    model carries a :class:`TrainingReport` with final train/test errors.

    With ``patience`` set and a non-empty held-out split, training stops
    once the held-out MAE has not improved for ``patience`` epochs and the
    weights of the best epoch are returned.
    """
    if patience is not None and patience < 1:
        raise PreconditionError("patience must be >= 1", patience=patience)
    if len(db) < min_samples:
        raise PreconditionError(
            f"Training needs at least {min_samples} samples", samples=len(db)
        )
    rng = np.random.default_rng(seed)
    X = np.array([s.features.features() for s in db])
    y = np.array([s.label for s in db])

    order = rng.permutation(len(db))
    n_test = int(round(test_fraction * len(db)))
    test_idx, train_idx = order[:n_test], order[n_test:]
    X_tr, y_tr = X[train_idx], y[train_idx]
    X_te, y_te = X[test_idx], y[test_idx]

    model = RegressorModel.initialize(X.shape[1], hidden, rng)
    model.x_mean, model.x_std = _standardize(X_tr)
    model.y_mean = float(y_tr.mean())
    y_std = float(y_tr.std())
    model.y_std = y_std if y_std > 0.0 else 1.0

    Z = (X_tr - model.x_mean) / model.x_std
    t = (y_tr - model.y_mean) / model.y_std
    vel_W = [np.zeros_like(W) for W in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    checkpoint = model.copy()
    history: List[float] = []
    track = patience is not None and n_test > 0
    best: Optional[RegressorModel] = None
    best_mae = math.inf
    best_epoch: Optional[int] = None

    for epoch in range(epochs):
        perm = rng.permutation(len(t))
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, len(perm), batch_size):
                idx = perm[start : start + batch_size]
                _sgd_step(model, Z[idx], t[idx], vel_W, vel_b, learning_rate, momentum)
            pred, _ = model._forward(Z)
            loss = float(np.mean((pred - t) ** 2))
        if not math.isfinite(loss):
            raise TrainingFailedError(
                f"Training diverged at epoch {epoch}",
                epoch=epoch,
                checkpoint=best if best is not None else checkpoint,
            )
        history.append(loss)
        checkpoint = model.copy()
        if epoch % 50 == 0 or epoch == epochs - 1:
            logger.debug(f"epoch {epoch}: train mse (standardized) {loss:.4e}")
        if not track:
            continue
        mae = float(np.mean(np.abs(model.predict(X_te) - y_te)))
        if mae < best_mae:
            best, best_mae, best_epoch = checkpoint, mae, epoch
        elif epoch - best_epoch >= patience:
            logger.info(
                f"Stopping at epoch {epoch}: held-out MAE flat since epoch "
                f"{best_epoch}"
            )
            break

    if best is not None:
        model = best
    train_mse = float(np.mean((model.predict(X_tr) - y_tr) ** 2))
    if n_test > 0:
        pred_te = model.predict(X_te)
        test_mse = float(np.mean((pred_te - y_te) ** 2))
        mae_corr = float(np.mean(np.abs(pred_te - y_te)))
        mae_raw = float(np.mean(np.abs(y_te)))
    else:
        test_mse = mae_corr = mae_raw = float("nan")
    model.report = TrainingReport(
        len(history), train_mse, test_mse, mae_corr, mae_raw, history, best_epoch
    )
    logger.info(
        f"Surrogate trained: held-out MAE {mae_corr / DAY:.2f} d "
        f"(Edelbaum alone {mae_raw / DAY:.2f} d)"
    )
    return model


def _sgd_step(
    model: RegressorModel,
    Z: np.ndarray,
    t: np.ndarray,
    vel_W: List[np.ndarray],
    vel_b: List[np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    out, acts = model._forward(Z)
    grad = (2.0 / len(t)) * (out - t)[:, None]
    for k in range(len(model.weights) - 1, -1, -1):
        gW = acts[k].T @ grad
        gb = grad.sum(axis=0)
        if k > 0:
            grad = (grad @ model.weights[k].T) * (acts[k] > 0.0)
        vel_W[k] = momentum * vel_W[k] - lr * gW
        vel_b[k] = momentum * vel_b[k] - lr * gb
        model.weights[k] += vel_W[k]
        model.biases[k] += vel_b[k]


def corrected_time(model: RegressorModel, inp: EdelbaumInput) -> float:
    """max(0, Edelbaum time + learned correction)."""
    return max(0.0, edelbaum_time(inp) + model(inp))


class TransferTimeEstimator:
    """Asteroid-to-ring flight-time estimate shared by every search stage."""

    def __init__(self, model: Optional[RegressorModel] = None):
        self.model = model

    @property
    def corrected(self) -> bool:
        return self.model is not None

    def estimate(
        self,
        ast: Asteroid,
        a_D: float,
        i_D: float = 0.0,
        raan_D: Optional[float] = None,
    ) -> float:
        inp = EdelbaumInput.for_asteroid(ast, a_D, i_D, raan_D)
        if self.model is None:
            return edelbaum_time(inp)
        return corrected_time(self.model, inp)

    def estimate_for_ring(self, ast: Asteroid, ring: RingConfig) -> float:
        return self.estimate(ast, ring.a_D, ring.i_D, ring.raan_D)


# ----------------------------------------------------------------------------
# Training database
# ----------------------------------------------------------------------------


def _solve_draw(options: OcpOptions, draw: Tuple[Asteroid, float]) -> TransferSolution:
    ast, a_st = draw
    return solve_phase_free(ast, RingConfig(a_D=a_st), options=options)


def build_training_db(
    pop: Population,
    a_st_range: Tuple[float, float] = (0.9 * AU, 1.4 * AU),
    n: int = 5000,
    seed: int = 0,
    options: Optional[OcpOptions] = None,
    runner: Optional[BatchRunner] = None,
    max_attempt_factor: int = 2,
) -> List[TrainingSample]:
    """Phase-free optimal times for random (asteroid, ring radius) draws.

    Draws are fixed by ``seed`` up front, so the database does not depend on
    the worker count. Unconverged and degenerate solves are skipped; drawing
    stops after ``max_attempt_factor * n`` attempts.
    """
    if n <= 0:
        return []
    options = options or OcpOptions()
    runner = runner or BatchRunner()
    rng = np.random.default_rng(seed)
    members = list(pop)
    total = max_attempt_factor * n
    picks = rng.integers(0, len(members), size=total)
    radii = rng.uniform(a_st_range[0], a_st_range[1], size=total)
    draws = [(members[k], float(a)) for k, a in zip(picks, radii)]

    samples: List[TrainingSample] = []
    cursor = 0
    solve = functools.partial(_solve_draw, options)
    while len(samples) < n and cursor < total:
        chunk = draws[cursor : cursor + (n - len(samples))]
        cursor += len(chunk)
        for (ast, a_st), result in zip(chunk, runner.map(solve, chunk)):
            if not isinstance(result, Ok):
                continue
            sol = result.value
            if not sol.converged or sol.degenerate or sol.T <= 0.0:
                logger.warning(f"Excluded ast={ast.id} a_st={a_st / AU:.4f} AU")
                continue
            inp = EdelbaumInput.for_asteroid(ast, a_st)
            samples.append(TrainingSample(inp, edelbaum_time(inp), sol.T, ast.id))
            if len(samples) == n:
                break

    if len(samples) < n / 2:
        raise DatabaseQualityError(len(samples), n)
    if len(samples) < n:
        logger.warning(f"Training database holds {len(samples)} of {n} samples")
    return samples


def save_db(db: Sequence[TrainingSample], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DB_HEADER)
        for s in db:
            f = s.features
            writer.writerow(
                [
                    s.ast_id,
                    repr(f.a_st),
                    repr(f.a_ast),
                    repr(f.e_ast),
                    repr(f.i_ast),
                    repr(f.argp_ast),
                    repr(f.i_st),
                    "" if f.raan_ast is None else repr(f.raan_ast),
                    "" if f.raan_st is None else repr(f.raan_st),
                    repr(s.t_hat),
                    repr(s.t_star),
                ]
            )


def load_db(path: Union[str, Path]) -> List[TrainingSample]:
    path = Path(path)
    samples: List[TrainingSample] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DB_HEADER:
            raise ParseError(
                "Unexpected training database header", line=1, path=str(path)
            )
        for line, row in enumerate(reader, start=2):
            try:
                opt = [None if x == "" else float(x) for x in row[7:9]]
                inp = EdelbaumInput(*(float(x) for x in row[1:7]), opt[0], opt[1])
                samples.append(
                    TrainingSample(inp, float(row[9]), float(row[10]), int(row[0]))
                )
            except (ValueError, IndexError, ValidationError) as e:
                raise ParseError(
                    f"Bad training sample: {e}", line=line, path=str(path)
                )
    return samples
