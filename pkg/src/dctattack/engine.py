"""Hard-label attack engine over a masked transform domain.

The attack never sees gradients or scores, only top-1 labels. It works in a
transform domain (per-patch low-frequency DCT coefficients by default, raw
pixels as a baseline), measuring for each direction the distance g to the
decision boundary by bisection, estimating the sign of the gradient of g
from label flips under small masked perturbations, and descending with a
backtracking step size. Every oracle call is charged to a ledger before it
happens, so budgets hold exactly even across errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dct import dct_blocks, idct_blocks
from .errors import (
    BudgetExhaustedError,
    DegenerateImageError,
    DirectionFailureError,
    InitializationFailureError,
    PatchLayoutError,
)
from .image import as_image, blocks_to_image, image_to_blocks
from .masking import lowfreq_mask, normalize_variances, weight_mask
from .oracle import HardLabelOracle, QueryLedger, query

DOMAIN_DCT = "dct_lowfreq"
DOMAIN_PIXEL = "pixel_full"

# Line-search schedule: the first coarse probe and how many times it doubles
# (or halves) before the direction is declared a dud.
COARSE_START = 0.1
COARSE_DOUBLINGS = 10
# Bisection steps spent per candidate while scanning starting directions; the
# winner is refined to full tolerance afterwards.
INIT_BISECT_STEPS = 5
# Step-size halvings tried per descent iteration before declaring a stall.
BACKTRACK_STEPS = 15
# After this many consecutive stalled iterations the probe radius is halved
# (once per run), never below the floor.
STALL_LIMIT = 3
EPS_REL_FLOOR = 1e-4

REASON_OK = "ok"
REASON_ALREADY_MISCLASSIFIED = "already_misclassified"
REASON_DEGENERATE = "degenerate_input"
REASON_INIT_FAILURE = "initialization_failure"
REASON_BUDGET = "budget_exhausted"


@dataclass(frozen=True)
class AttackConfig:
    """Knobs for a single-image attack.

    eps_smooth and eta0 are relative: the probe radius is eps_smooth times
    the current direction norm, the first step size is eta0 times the current
    boundary distance. seed may be an int or a tuple of ints (tuples let a
    harness derive independent per-image streams from one master seed).
    """

    d: int = 16                 # patch side length
    r: int = 3                  # kept low-frequency corner per patch
    alpha: float = 4.0          # global mask gain
    budget: int = 4000          # total oracle queries allowed
    init_samples: int = 100     # random starting directions scanned
    probes: int = 100           # label probes per gradient-sign estimate
    eps_smooth: float = 0.01    # probe radius, relative to direction norm
    eta0: float = 0.2           # first step size, relative to boundary distance
    bs_tol: float = 1e-3        # bisection stops when (hi - lo) <= bs_tol * hi
    seed: int | tuple[int, ...] = 0
    domain: str = DOMAIN_DCT
    probe_dist: str = "gaussian"  # probe noise: "gaussian" or "uniform"

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError(f"patch size must be positive, got {self.d}")
        if not 1 <= self.r <= self.d:
            raise ValueError(f"corner size must satisfy 1 <= r <= d, got {self.r}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.budget < 1:
            raise ValueError(f"budget must be at least 1, got {self.budget}")
        if self.init_samples < 1:
            raise ValueError(f"need at least one starting sample, got {self.init_samples}")
        if self.probes < 1:
            raise ValueError(f"need at least one probe, got {self.probes}")
        if self.eps_smooth <= 0:
            raise ValueError(f"probe radius must be positive, got {self.eps_smooth}")
        if self.eta0 <= 0:
            raise ValueError(f"step size must be positive, got {self.eta0}")
        if not 0.0 < self.bs_tol < 1.0:
            raise ValueError(f"bisection tolerance must be in (0, 1), got {self.bs_tol}")
        if self.domain not in (DOMAIN_DCT, DOMAIN_PIXEL):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.probe_dist not in ("gaussian", "uniform"):
            raise ValueError(f"unknown probe distribution {self.probe_dist!r}")


class TracePoint(NamedTuple):
    iteration: int
    queries_used: int
    best_g: float


@dataclass(frozen=True)
class Direction:
    """A search direction with a certified boundary distance.

    adv_label was actually observed at distance g along theta/norm (on the
    clipped image), so it doubles as an adversarial certificate. pixel_dir is
    the unit direction mapped to pixel space, kept so later reconstructions
    reuse the exact floats the certifying query saw.
    """

    theta: np.ndarray
    norm: float
    g: float
    adv_label: int
    pixel_dir: np.ndarray


@dataclass(frozen=True, eq=False)
class AttackResult:
    adversarial: np.ndarray
    initial_label: int
    final_label: int
    l2: float
    queries_used: int
    succeeded: bool
    reason: str
    trace: tuple[TracePoint, ...]


def apply_mask(theta: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Elementwise product; shapes must match exactly."""
    t = np.asarray(theta, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if t.shape != m.shape:
        raise ValueError(f"direction shape {t.shape} != mask shape {m.shape}")
    return t * m


class _Bracket(NamedTuple):
    lo: float
    hi: float
    adv_label: int


class AttackRun:
    """State for attacking one image against one oracle.

    Construct, then either call run() for the full attack or prepare() plus
    individual steps (initialize_direction, estimate_sign_gradient, descend)
    when testing the pieces.
    """

    def __init__(
        self,
        x0,
        oracle: HardLabelOracle,
        config: AttackConfig | None = None,
        true_label: int | None = None,
    ):
        self.config = config or AttackConfig()
        self.x0 = as_image(x0)
        h, w, _ = self.x0.shape
        if h % self.config.d or w % self.config.d:
            raise PatchLayoutError(
                f"{w}x{h} image does not divide into {self.config.d}x{self.config.d} patches"
            )
        if float(self.x0.min()) < 0.0 or float(self.x0.max()) > 1.0:
            raise ValueError("input image must lie in [0, 1]")
        self.oracle = oracle
        self.true_label = true_label
        self.ledger = QueryLedger(budget=self.config.budget)
        self.rng = np.random.default_rng(self.config.seed)
        self.y0: int | None = None
        self.base: np.ndarray | None = None   # transform-domain image
        self.mask: np.ndarray | None = None   # dense weights, same shape
        self.rows = 0
        self.cols = 0
        self.eps_rel = self.config.eps_smooth
        self._x_base: np.ndarray | None = None

    # -- setup ------------------------------------------------------------

    def observe_label(self) -> int:
        """Query the clean image's label (counted against the budget)."""
        self.y0 = query(self.oracle, self.ledger, self.x0)
        return self.y0

    def build_domain(self) -> None:
        """Crop, transform, and build the search mask for the clean image."""
        cfg = self.config
        blocks, rows, cols = image_to_blocks(self.x0, cfg.d)
        self.rows, self.cols = rows, cols
        channels = blocks.shape[3]
        if cfg.domain == DOMAIN_DCT:
            self.base = dct_blocks(blocks)
            variances = blocks.reshape(blocks.shape[0], -1).var(axis=1)
            q_norm = normalize_variances(variances)
            bmask = lowfreq_mask(cfg.d, cfg.r, rows, cols)
            self.mask = weight_mask(q_norm, bmask, cfg.alpha, channels=channels).values
        else:
            self.base = blocks.copy()
            self.mask = np.ones_like(blocks)
        self._x_base = self._to_pixels(self.base)

    def prepare(self) -> None:
        """observe_label followed by build_domain."""
        self.observe_label()
        self.build_domain()

    def _to_pixels(self, coeffs: np.ndarray) -> np.ndarray:
        if self.config.domain == DOMAIN_DCT:
            blocks = idct_blocks(coeffs)
        else:
            blocks = coeffs
        return blocks_to_image(blocks, self.rows, self.cols)

    # -- boundary search ---------------------------------------------------

    def _probe(self, lam: float, pixel_dir: np.ndarray) -> int:
        return query(self.oracle, self.ledger, self._x_base + lam * pixel_dir)

    def _bisect(
        self,
        pixel_dir: np.ndarray,
        lo: float,
        hi: float,
        adv_label: int,
        max_steps: int | None = None,
        abort_above: float | None = None,
    ) -> _Bracket | None:
        tol = self.config.bs_tol
        steps = 0
        while hi - lo > tol * hi and (max_steps is None or steps < max_steps):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:  # float precision exhausted
                break
            label = self._probe(mid, pixel_dir)
            if label != self.y0:
                hi, adv_label = mid, label
            else:
                lo = mid
                if abort_above is not None and lo >= abort_above:
                    return None
            steps += 1
        return _Bracket(lo, hi, adv_label)

    def _search(
        self,
        pixel_dir: np.ndarray,
        hint: float | None = None,
        max_bisect: int | None = None,
        abort_above: float | None = None,
    ) -> _Bracket | None:
        """Bracket the boundary crossing along pixel_dir, then bisect.

        Without a hint, probes start at COARSE_START and double. With a hint
        (the previous distance), probes hint*(1 -+ tol) first, then contracts
        or expands geometrically. Returns None once lo proves the crossing
        cannot beat abort_above; raises DirectionFailureError when the
        geometric scan runs out of range without a crossing.
        """
        tol = self.config.bs_tol
        lo = 0.0
        hi = None
        adv_label = 0
        if hint is None:
            lam = COARSE_START
            for _ in range(COARSE_DOUBLINGS + 1):
                label = self._probe(lam, pixel_dir)
                if label != self.y0:
                    hi, adv_label = lam, label
                    break
                lo = lam
                if abort_above is not None and lo >= abort_above:
                    return None
                lam *= 2.0
            if hi is None:
                raise DirectionFailureError(
                    f"no boundary crossing up to {lo:g} along this direction"
                )
        else:
            below = hint * (1.0 - tol)
            label = self._probe(below, pixel_dir)
            if label != self.y0:
                hi, adv_label = below, label
                lam = 0.5 * below
                for _ in range(COARSE_DOUBLINGS):
                    label = self._probe(lam, pixel_dir)
                    if label == self.y0:
                        lo = lam
                        break
                    hi, adv_label = lam, label
                    lam *= 0.5
                # contraction exhausted: lo stays 0, anchored by f(x0) = y0
            else:
                lo = below
                if abort_above is not None and lo >= abort_above:
                    return None
                above = hint * (1.0 + tol)
                label = self._probe(above, pixel_dir)
                if label != self.y0:
                    hi, adv_label = above, label
                else:
                    lo = above
                    if abort_above is not None and lo >= abort_above:
                        return None
                    lam = 2.0 * above
                    for _ in range(COARSE_DOUBLINGS):
                        label = self._probe(lam, pixel_dir)
                        if label != self.y0:
                            hi, adv_label = lam, label
                            break
                        lo = lam
                        if abort_above is not None and lo >= abort_above:
                            return None
                        lam *= 2.0
                    if hi is None:
                        raise DirectionFailureError(
                            f"boundary receded beyond {lo:g} along this direction"
                        )
        return self._bisect(
            pixel_dir, lo, hi, adv_label, max_steps=max_bisect, abort_above=abort_above
        )

    def boundary_distance(self, theta_prime, hint: float | None = None) -> float:
        """Distance from x0 to the boundary along theta_prime, to bs_tol.

        Returns the certified upper end of the final bracket: an input at
        that distance was actually observed to flip the label.
        """
        theta = np.asarray(theta_prime, dtype=np.float64)
        nrm = float(np.linalg.norm(theta.ravel()))
        if nrm == 0.0:
            raise ValueError("cannot search along a zero direction")
        found = self._search(self._to_pixels(theta / nrm), hint=hint)
        return found.hi

    # -- attack steps -------------------------------------------------------

    def initialize_direction(self) -> Direction:
        """Scan random masked directions and keep the closest boundary.

        Each candidate gets a coarse bracket plus a few bisection steps; the
        best one is refined to full tolerance. If the budget dies mid-scan
        the best candidate so far is returned (its certificate still holds),
        and only a scan with no crossing at all raises.
        """
        cfg = self.config
        if not self.mask.any():
            raise InitializationFailureError("the search mask has no support")
        best: tuple[np.ndarray, float, np.ndarray, _Bracket] | None = None
        exhausted = False
        for _ in range(cfg.init_samples):
            theta = self.rng.standard_normal(self.base.shape)
            theta_p = theta * self.mask
            nrm = float(np.linalg.norm(theta_p.ravel()))
            if nrm == 0.0:
                continue
            pixel_dir = self._to_pixels(theta_p / nrm)
            # a candidate whose proven lower bound passes the incumbent's
            # certified distance can never win, so its search may stop early
            incumbent = None if best is None else best[3].hi
            try:
                found = self._search(
                    pixel_dir, max_bisect=INIT_BISECT_STEPS, abort_above=incumbent
                )
            except DirectionFailureError:
                continue
            except BudgetExhaustedError:
                if best is None:
                    raise
                exhausted = True
                break
            if found is not None and (best is None or found.hi < best[3].hi):
                best = (theta_p, nrm, pixel_dir, found)
        if best is None:
            raise InitializationFailureError(
                f"none of {cfg.init_samples} sampled directions crossed the boundary"
            )
        theta_p, nrm, pixel_dir, found = best
        if not exhausted:
            try:
                refined = self._bisect(pixel_dir, found.lo, found.hi, found.adv_label)
                if refined is not None:
                    found = refined
            except BudgetExhaustedError:
                pass  # keep the coarse certificate
        return Direction(
            theta=theta_p, norm=nrm, g=found.hi, adv_label=found.adv_label,
            pixel_dir=pixel_dir,
        )

    def estimate_sign_gradient(self, direction: Direction, eps_rel: float) -> np.ndarray:
        """Monte-Carlo sign estimate of the gradient of g at the direction.

        Spends exactly config.probes queries. Each probe nudges the direction
        by eps_rel * ||theta|| of masked noise and checks whether the image at
        the current certified distance keeps its label (boundary moved out,
        sign +1) or flips (boundary moved in, sign -1).
        """
        cfg = self.config
        eps = eps_rel * direction.norm
        total = np.zeros_like(direction.theta)
        for _ in range(cfg.probes):
            if cfg.probe_dist == "gaussian":
                mu = self.rng.standard_normal(direction.theta.shape)
            else:
                mu = self.rng.uniform(-1.0, 1.0, size=direction.theta.shape)
            nu = mu * self.mask
            perturbed = direction.theta + eps * nu
            nrm = float(np.linalg.norm(perturbed.ravel()))
            pixel = self._to_pixels(perturbed / nrm)
            label = query(self.oracle, self.ledger, self._x_base + direction.g * pixel)
            sign = 1.0 if label == self.y0 else -1.0
            total += sign * nu
        return total / cfg.probes

    def descend(self, direction: Direction, theta_hat: np.ndarray) -> tuple[Direction, bool]:
        """One backtracking descent step against the sign-gradient estimate.

        A candidate is accepted only when its boundary distance improves on
        the incumbent by more than the bisection tolerance; a single probe at
        g*(1 - bs_tol) settles rejection. Returns (direction, stalled): after
        BACKTRACK_STEPS halvings without an accept, the incumbent stands.
        """
        if not theta_hat.any():
            return direction, True
        g = direction.g
        accept_below = g * (1.0 - self.config.bs_tol)
        eta = self.config.eta0 * g
        for _ in range(BACKTRACK_STEPS):
            cand = direction.theta - eta * theta_hat
            nrm = float(np.linalg.norm(cand.ravel()))
            if nrm > 0.0:
                pixel = self._to_pixels(cand / nrm)
                found = self._search(pixel, hint=g, abort_above=accept_below)
                if found is not None:
                    return (
                        Direction(
                            theta=cand, norm=nrm, g=found.hi,
                            adv_label=found.adv_label, pixel_dir=pixel,
                        ),
                        False,
                    )
            eta *= 0.5
        return direction, True

    # -- finalization --------------------------------------------------------

    def finalize_image(self, direction: Direction) -> np.ndarray:
        """Clipped reconstruction at the certified boundary distance."""
        return np.clip(self._x_base + direction.g * direction.pixel_dir, 0.0, 1.0)

    def _finalize(self, direction: Direction) -> tuple[np.ndarray, int, bool]:
        """Verify the final image, re-expanding if clipping undid the flip.

        The finalize tensor is bitwise the one the certifying query saw, so
        for a deterministic oracle verification always agrees; when no budget
        remains the certificate label stands in.
        """
        g = direction.g
        x_hat = np.clip(self._x_base + g * direction.pixel_dir, 0.0, 1.0)
        try:
            label = query(self.oracle, self.ledger, x_hat)
        except BudgetExhaustedError:
            return x_hat, direction.adv_label, True
        while label == self.y0:
            g *= 1.01
            x_hat = np.clip(self._x_base + g * direction.pixel_dir, 0.0, 1.0)
            try:
                label = query(self.oracle, self.ledger, x_hat)
            except BudgetExhaustedError:
                return x_hat, self.y0, False
        return x_hat, label, True

    # -- full attack ---------------------------------------------------------

    def run(self) -> AttackResult:
        cfg = self.config
        self.observe_label()
        if self.true_label is not None and self.y0 != self.true_label:
            return self._failure(REASON_ALREADY_MISCLASSIFIED)
        try:
            self.build_domain()
        except DegenerateImageError:
            return self._failure(REASON_DEGENERATE)
        try:
            direction = self.initialize_direction()
        except InitializationFailureError:
            return self._failure(REASON_INIT_FAILURE)
        except BudgetExhaustedError:
            return self._failure(REASON_BUDGET)
        trace = [TracePoint(0, self.ledger.used, direction.g)]
        self.eps_rel = cfg.eps_smooth
        halved = False
        streak = 0
        iteration = 0
        while self.ledger.used < cfg.budget:
            iteration += 1
            try:
                theta_hat = self.estimate_sign_gradient(direction, self.eps_rel)
                direction, stalled = self.descend(direction, theta_hat)
            except BudgetExhaustedError:
                break
            if stalled:
                streak += 1
                if streak >= STALL_LIMIT and not halved:
                    self.eps_rel = max(0.5 * self.eps_rel, EPS_REL_FLOOR)
                    halved = True
            else:
                streak = 0
            trace.append(TracePoint(iteration, self.ledger.used, direction.g))
        x_hat, final_label, certified = self._finalize(direction)
        return AttackResult(
            adversarial=x_hat,
            initial_label=self.y0,
            final_label=final_label,
            l2=float(np.linalg.norm((x_hat - self.x0).ravel())),
            queries_used=self.ledger.used,
            succeeded=certified,
            reason=REASON_OK if certified else REASON_BUDGET,
            trace=tuple(trace),
        )

    def _failure(self, reason: str) -> AttackResult:
        return AttackResult(
            adversarial=self.x0.copy(),
            initial_label=self.y0,
            final_label=self.y0,
            l2=0.0,
            queries_used=self.ledger.used,
            succeeded=False,
            reason=reason,
            trace=(),
        )


def run_attack(
    x0,
    oracle: HardLabelOracle,
    config: AttackConfig | None = None,
    true_label: int | None = None,
) -> AttackResult:
    """Attack one image end to end; see AttackRun for the step-by-step API."""
    return AttackRun(x0, oracle, config=config, true_label=true_label).run()
