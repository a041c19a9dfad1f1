"""A desk-scale three-player GAN on a mixture of planar Gaussians.

Three networks play a min-max-max game:

* the discriminator D sees a point and a one-hot (or soft) label and outputs
  the probability that the pair is *fake* (0 = real),
* the classifier C maps a point to class probabilities,
* the generator G maps noise and a requested label to a point.

Batch terms (means over the batch, probabilities clamped to [1e-7, 1-1e-7])::

    t1 = BCE(D(x, y), 0)              real pairs
    t2 = BCE(D(G(z, y_z), C(G)), 1)   generated points labelled by C
    t3 = BCE(D(G(z, y_z), y_z), 1)    generated points with the requested label
    t4 = CCE(C(G(z, y_z)), y_z)
    t5 = CCE(C(x), y)

    L_D = t1 + t2      U_C = t5 + t4 + t2      U_G = t3 + t4

D minimizes L_D. Maximizing U_C and U_G as written would push C and G to
*misclassify*, so by default C minimizes ``t5 + t4 - t2`` and G minimizes
``t4 - t3``: both still work against D through the BCE terms but fit labels
through the CCE terms. ``literal_utilities=True`` ascends U_C and U_G
unchanged instead.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dynamics import Order, ScheduleConfig
from .mlp import Mlp

CLAMP = 1e-7
NETS = ("d", "c", "g")
# ScheduleConfig talks about (theta, phi, psi); the lone minimizer D takes the
# theta slot so that "maximizer first" means D first, then C and G together.
ROLE = {"theta": "d", "phi": "c", "psi": "g"}
LOG_HEADER = ["iter", "l_d", "u_c", "u_g", "class_match_rate"]
SAMPLES_HEADER = ["class_requested", "x0", "x1"]

# Weights of (t1, ..., t5) in each player's minimized objective.
OBJECTIVES = {
    False: {"d": (1, 1, 0, 0, 0), "c": (0, -1, 0, 1, 1), "g": (0, 0, -1, 1, 0)},
    True: {"d": (1, 1, 0, 0, 0), "c": (0, -1, 0, -1, -1), "g": (0, 0, -1, -1, 0)},
}


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, player):
        super().__init__(f"non-finite gradient for player {player!r}")
        self.player = player


@dataclass(frozen=True)
class MixtureSpec:
    means: np.ndarray
    covs: np.ndarray
    samples_per_draw: int = 64
    seed: int = 0

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        covs = np.array(self.covs, dtype=float)
        if means.ndim != 2 or means.shape[1] != 2 or covs.shape != (len(means), 2, 2):
            raise ValueError("need K means of length 2 and K 2x2 covariances")
        if not np.allclose(covs, covs.transpose(0, 2, 1)):
            raise ValueError("covariances must be symmetric")
        if np.any(np.linalg.eigvalsh(covs) <= 0):
            raise ValueError("covariances must be positive definite")
        for arr in (means, covs):
            arr.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    @classmethod
    def default(cls, k=6, radius=2.0, var=0.05, **kwargs):
        angles = 2 * np.pi * np.arange(k) / k
        means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return cls(means, np.repeat(var * np.eye(2)[None], k, axis=0), **kwargs)

    @classmethod
    def from_data(cls, X, y, k):
        means = np.stack([X[y == j].mean(axis=0) for j in range(k)])
        covs = np.stack([np.cov(X[y == j].T) + 1e-9 * np.eye(2) for j in range(k)])
        return cls(means, covs)

    @property
    def k(self):
        return len(self.means)

    def rng(self):
        return np.random.default_rng(self.seed)

    def mahalanobis(self, X):
        """Distances of every point to every component, shape (n, K)."""
        diff = X[:, None, :] - self.means[None]
        prec = np.linalg.inv(self.covs)
        return np.sqrt(np.einsum("nki,kij,nkj->nk", diff, prec, diff))


def sample_real(mix, n, rng=None):
    """Draw ``n`` labelled points; classes are uniform over the components."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = mix.rng() if rng is None else rng
    y = rng.integers(mix.k, size=n)
    chol = np.linalg.cholesky(mix.covs)
    z = rng.standard_normal((n, 2))
    return mix.means[y] + np.einsum("nij,nj->ni", chol[y], z), y


def sample_noise(k, n, noise_dim=8, rng=None):
    """Standard normal noise with uniformly drawn requested labels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    return rng.standard_normal((n, noise_dim)), rng.integers(k, size=n)


def one_hot(y, k):
    out = np.zeros((len(y), k))
    out[np.arange(len(y)), y] = 1.0
    return out


def default_networks(k=6, noise_dim=8, hidden=(32, 32), rng=None):
    rng = np.random.default_rng() if rng is None else rng
    d = Mlp((2 + k, *hidden, 1), output="sigmoid", rng=rng)
    c = Mlp((2, *hidden, k), output="softmax", rng=rng)
    g = Mlp((noise_dim + k, *hidden, 2), output="identity", rng=rng)
    return d, c, g


def _check_shapes(d, c, g, real_batch, noise_batch):
    (x, y), (z, yz) = real_batch, noise_batch
    k = c.sizes[-1]
    if len(x) == 0 or len(z) == 0:
        raise ValueError("batches must be non-empty")
    if d.sizes[0] != 2 + k or d.sizes[-1] != 1 or c.sizes[0] != 2 \
            or g.sizes[0] != z.shape[1] + k or g.sizes[-1] != 2:
        raise ValueError("network shapes are inconsistent")
    if x.shape != (len(y), 2) or len(yz) != len(z):
        raise ValueError("batch shapes are inconsistent")
    return k


def _bce(p, t):
    pc = np.clip(p, CLAMP, 1 - CLAMP)
    return -(t * np.log(pc) + (1 - t) * np.log(1 - pc))


def _bce_grad(p, t):
    pc = np.clip(p, CLAMP, 1 - CLAMP)
    inside = (p >= CLAMP) & (p <= 1 - CLAMP)
    return np.where(inside, -t / pc + (1 - t) / (1 - pc), 0.0)


def _cce(P, E):
    return -np.sum(E * np.log(np.clip(P, CLAMP, 1 - CLAMP)), axis=-1)


def _cce_grad(P, E):
    pc = np.clip(P, CLAMP, 1 - CLAMP)
    inside = (P >= CLAMP) & (P <= 1 - CLAMP)
    return np.where(inside, -E / pc, 0.0)


class GanBatchLosses(NamedTuple):
    l_d: float
    u_c: float
    u_g: float
    terms: tuple = ()


class _Pass:
    """Forward pass through all three networks on one pair of batches."""

    def __init__(self, d, c, g, real_batch, noise_batch):
        k = _check_shapes(d, c, g, real_batch, noise_batch)
        (x, y), (z, yz) = real_batch, noise_batch
        self.nets = {"d": d, "c": c, "g": g}
        self.E, self.Ez = one_hot(y, k), one_hot(yz, k)
        self.d_real, self.cache_dr = d.forward(np.hstack([x, self.E]))
        self.c_real, self.cache_cr = c.forward(x)
        self.xg, self.cache_g = g.forward(np.hstack([z, self.Ez]))
        self.c_fake, self.cache_cf = c.forward(self.xg)
        self.d_fc, self.cache_dfc = d.forward(np.hstack([self.xg, self.c_fake]))
        self.d_fy, self.cache_dfy = d.forward(np.hstack([self.xg, self.Ez]))

    def terms(self):
        return (float(np.mean(_bce(self.d_real, 0.0))),
                float(np.mean(_bce(self.d_fc, 1.0))),
                float(np.mean(_bce(self.d_fy, 1.0))),
                float(np.mean(_cce(self.c_fake, self.Ez))),
                float(np.mean(_cce(self.c_real, self.E))))

    def gradients(self, w):
        """Gradients of ``sum_i w[i] * t_i`` w.r.t. every network's parameters."""
        d, c, g = self.nets["d"], self.nets["c"], self.nets["g"]
        n, m = len(self.d_real), len(self.xg)
        grads = {name: [np.zeros_like(p) for p in net.params] for name, net in self.nets.items()}

        def add(name, gs):
            for acc, gi in zip(grads[name], gs):
                acc += gi

        dxg = np.zeros_like(self.xg)
        dcf = _cce_grad(self.c_fake, self.Ez) * (w[3] / m)
        if w[0]:
            gs, _ = d.backward(self.cache_dr, _bce_grad(self.d_real, 0.0) * (w[0] / n))
            add("d", gs)
        if w[1]:
            gs, gin = d.backward(self.cache_dfc, _bce_grad(self.d_fc, 1.0) * (w[1] / m))
            add("d", gs)
            dxg += gin[:, :2]
            dcf = dcf + gin[:, 2:]
        if w[2]:
            gs, gin = d.backward(self.cache_dfy, _bce_grad(self.d_fy, 1.0) * (w[2] / m))
            add("d", gs)
            dxg += gin[:, :2]
        if w[1] or w[3]:
            gs, gin = c.backward(self.cache_cf, dcf)
            add("c", gs)
            dxg += gin
        if w[4]:
            gs, _ = c.backward(self.cache_cr, _cce_grad(self.c_real, self.E) * (w[4] / n))
            add("c", gs)
        if w[1] or w[2] or w[3]:
            gs, _ = g.backward(self.cache_g, dxg)
            add("g", gs)
        return grads


def losses(d, c, g, real_batch, noise_batch):
    """Objective values on one minibatch; ``terms`` holds (t1, ..., t5)."""
    t = _Pass(d, c, g, real_batch, noise_batch).terms()
    return GanBatchLosses(t[0] + t[1], t[4] + t[3] + t[1], t[2] + t[3], t)


def objective_weights(player, literal_utilities=False):
    return OBJECTIVES[bool(literal_utilities)][player]


def objective_gradients(d, c, g, real_batch, noise_batch, player, literal_utilities=False):
    """Gradients of ``player``'s minimized objective w.r.t. all three networks."""
    return _Pass(d, c, g, real_batch, noise_batch).gradients(objective_weights(player, literal_utilities))


def train_step(d, c, g, cfg, batches, literal_utilities=False, eta=None):
    """One heavy-ball update of all three networks under ``cfg``'s schedule.

    ``cfg.beta`` is read as (beta_D, beta_C, beta_G). Inputs are not mutated;
    new networks are returned. Every stage re-evaluates gradients on the same
    ``batches`` = (real_batch, noise_batch) with the freshest parameters.
    ``eta`` overrides ``cfg.eta`` and, unlike it, may be zero.
    """
    eta = cfg.eta if eta is None else float(eta)
    if not eta >= 0:
        raise ValueError("eta must be >= 0")
    real_batch, noise_batch = batches
    nets = {"d": d, "c": c, "g": g}
    betas = {ROLE[p]: b for p, b in zip(("theta", "phi", "psi"), cfg.beta)}
    perm = tuple(ROLE[p] for p in cfg.permutation)
    if cfg.order is Order.SIMULTANEOUS:
        stages = (NETS,)
    elif cfg.order is Order.ALTERNATING:
        stages = tuple((p,) for p in perm)
    else:
        stages = (("d",), ("c", "g"))
    for stage in stages:
        fwd = _Pass(nets["d"], nets["c"], nets["g"], real_batch, noise_batch)
        updated = {}
        for name in stage:
            grads = fwd.gradients(objective_weights(name, literal_utilities))[name]
            if not all(np.all(np.isfinite(gr)) for gr in grads):
                raise NonFiniteGradientError(name)
            net = nets[name]
            new = net.copy()
            beta = betas[name]
            new.params = [p - eta * gr + beta * v
                          for p, gr, v in zip(net.params, grads, net.velocity)]
            new.velocity = [q - p for q, p in zip(new.params, net.params)]
            updated[name] = new
        nets.update(updated)
    return nets["d"], nets["c"], nets["g"]


def generate(g, k, labels, rng, noise_dim=None):
    noise_dim = g.sizes[0] - k if noise_dim is None else noise_dim
    labels = np.asarray(labels, dtype=int)
    z = rng.standard_normal((len(labels), noise_dim))
    return g(np.hstack([z, one_hot(labels, k)]))


def evaluate(g, c, mix, n, rng=None):
    """Score ``n`` generated points per class against the mixture.

    ``class_match_rate`` is the fraction whose nearest component (Mahalanobis)
    is the requested one; ``mean_mahalanobis`` the mean distance to it.
    ``classifier_accuracy`` is how often C agrees with the requested label.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    labels = np.repeat(np.arange(mix.k), n)
    pts = generate(g, mix.k, labels, rng)
    dist = mix.mahalanobis(pts)
    own = dist[np.arange(len(labels)), labels]
    return {
        "class_match_rate": float(np.mean(np.argmin(dist, axis=1) == labels)),
        "mean_mahalanobis": float(np.mean(own)),
        "within_3sd_rate": float(np.mean(own <= 3.0)),
        "classifier_accuracy": float(np.mean(np.argmax(c(pts), axis=1) == labels)),
    }


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)

    def append(self, it, batch_losses, match):
        self.rows.append((int(it), batch_losses.l_d, batch_losses.u_c, batch_losses.u_g, float(match)))

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(LOG_HEADER) + "\n")
            for row in self.rows:
                fh.write(f"{row[0]}," + ",".join(repr(float(v)) for v in row[1:]) + "\n")

    @classmethod
    def read_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header != LOG_HEADER:
                raise ValueError(f"unexpected header {header}")
            rows = []
            for line in fh:
                vals = line.strip().split(",")
                rows.append((int(vals[0]), *(float(v) for v in vals[1:])))
        return cls(rows)


def write_samples_csv(labels, points, path):
    with open(path, "w") as fh:
        fh.write(",".join(SAMPLES_HEADER) + "\n")
        for lab, (x0, x1) in zip(labels, points):
            fh.write(f"{int(lab)},{float(x0)!r},{float(x1)!r}\n")


def read_samples_csv(path):
    data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
    return data[:, 0].astype(int), data[:, 1:3]


class SquidGAN(BaseEstimator):
    """Conditional generator trained jointly with a discriminator and a classifier.

    ``fit(X, y)`` trains on labelled 2-d points for ``n_iter`` minibatch steps;
    afterwards ``sample`` draws points for requested labels and
    ``predict``/``predict_proba`` use the trained classifier.

    ``beta`` is (beta_D, beta_C, beta_G). ``order="maximizer_first"`` updates
    D first and then C and G simultaneously.
    """

    def __init__(self, noise_dim=8, hidden=(32, 32), eta=1e-3, beta=(-0.5, 0.5, 0.5),
                 order="alternating", n_iter=20_000, batch_size=64, literal_utilities=False,
                 log_every=1000, eval_n=200, random_state=0):
        self.noise_dim = noise_dim
        self.hidden = hidden
        self.eta = eta
        self.beta = beta
        self.order = order
        self.n_iter = n_iter
        self.batch_size = batch_size
        self.literal_utilities = literal_utilities
        self.log_every = log_every
        self.eval_n = eval_n
        self.random_state = random_state

    def _schedule(self):
        return ScheduleConfig(order=self.order, eta=self.eta, beta=tuple(self.beta))

    def fit(self, X, y, mixture=None):
        """Train on (X, y). ``mixture`` (a MixtureSpec) is used for the logged
        class-match rate; it defaults to per-class Gaussian fits of the data."""
        X, y = check_X_y(X, y)
        if X.shape[1] != 2:
            raise ValueError("SquidGAN works on 2-d points")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        k = len(self.classes_)
        if k < 2:
            raise ValueError("need at least two classes")
        cfg = self._schedule()
        if self.n_iter < 0 or self.batch_size < 1:
            raise ValueError("n_iter must be >= 0 and batch_size >= 1")
        self.mixture_ = mixture if mixture is not None else MixtureSpec.from_data(X, y_idx, k)

        rng = np.random.default_rng(self.random_state)
        d, c, g = default_networks(k, self.noise_dim, tuple(self.hidden), rng)
        self.log_ = TrainingLog()
        if self.log_every:
            self._log(0, d, c, g, X, y_idx, k)
        for it in range(1, self.n_iter + 1):
            idx = rng.integers(len(X), size=self.batch_size)
            real = (X[idx], y_idx[idx])
            noise = sample_noise(k, self.batch_size, self.noise_dim, rng)
            d, c, g = train_step(d, c, g, cfg, (real, noise), self.literal_utilities)
            if self.log_every and (it % self.log_every == 0 or it == self.n_iter):
                self._log(it, d, c, g, X, y_idx, k)
        self.discriminator_, self.classifier_, self.generator_ = d, c, g
        self.n_iter_ = self.n_iter
        return self

    def _log(self, it, d, c, g, X, y_idx, k):
        # a separate stream per logged iteration keeps training draws unchanged
        rng = np.random.default_rng([self.random_state, it])
        idx = rng.integers(len(X), size=self.batch_size)
        noise = sample_noise(k, self.batch_size, self.noise_dim, rng)
        score = evaluate(g, c, self.mixture_, self.eval_n, rng)
        self.log_.append(it, losses(d, c, g, (X[idx], y_idx[idx]), noise), score["class_match_rate"])

    def sample(self, labels, random_state=None):
        """Generate one point per entry of ``labels`` (original class values)."""
        check_is_fitted(self, "generator_")
        labels = np.asarray(labels)
        idx = np.searchsorted(self.classes_, labels)
        if np.any(idx >= len(self.classes_)) or np.any(self.classes_[np.minimum(idx, len(self.classes_) - 1)] != labels):
            raise ValueError("unknown class label requested")
        rng = np.random.default_rng(self.random_state if random_state is None else random_state)
        return generate(self.generator_, len(self.classes_), idx, rng, self.noise_dim)

    def predict_proba(self, X):
        check_is_fitted(self, "classifier_")
        return self.classifier_(check_array(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def evaluate(self, mixture=None, n=500, random_state=0):
        check_is_fitted(self, "generator_")
        mixture = mixture if mixture is not None else getattr(self, "mixture_", None)
        if mixture is None:
            raise ValueError("no mixture to evaluate against")
        return evaluate(self.generator_, self.classifier_, mixture, n,
                        np.random.default_rng(random_state))

    def checkpoint(self):
        check_is_fitted(self, "generator_")
        return {"params": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in self.get_params().items()},
                "classes": self.classes_.tolist(),
                "networks": {"d": self.discriminator_.to_dict(), "c": self.classifier_.to_dict(),
                             "g": self.generator_.to_dict()}}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.checkpoint(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        params = doc["params"]
        for key in ("hidden", "beta"):
            params[key] = tuple(params[key])
        est = cls(**params)
        est.classes_ = np.array(doc["classes"])
        nets = {k: Mlp.from_dict(v) for k, v in doc["networks"].items()}
        est.discriminator_, est.classifier_, est.generator_ = nets["d"], nets["c"], nets["g"]
        return est
