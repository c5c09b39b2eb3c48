"""Stochastic finite-capacity surface occupancy for one sensor exposure.

Molecule counts arrive as Poisson draws from concentration times exposure
volume times Avogadro's number.  Targets and background fragments are then
processed in a uniformly random interleaved order; a molecule with binding
weight w binds with probability w*(n_sites - k)/n_sites, where k is the
number of sites already bound when its trial occurs.  Bound molecules get a
fragment length drawn uniformly from their class's base-pair range.

The sampler factors each molecule's trial into two stages that together
reproduce that law exactly:

* an attempt stage, Bernoulli(w), independent of everything else;
* a site stage where each attempt picks one of the n_sites uniformly at
  random and binds only if that site is still free.  Given k bound sites the
  success probability is (n_sites - k)/n_sites, which is exactly the
  free-site scaling, and a site stays taken once claimed.

This lets the stream be processed in vectorized chunks without changing the
distribution: chunk class composition follows the hypergeometric law of a
uniform interleave, attempt order within a chunk is exchangeable, and the
first attempt to reach a free site claims it.  Once every site is taken no
later molecule can bind, so the tail of the stream is skipped.

``assign_sites_exact`` draws every molecule's weight explicitly.
``assign_sites_batched`` processes the stream in batches of ``batch_size``
molecules and replaces the per-molecule weight draws with their exact
analytic marginalization (attempts per class ~ Binomial(n, mean weight),
valid because weights are independent of lengths and of each other).  The
two modes sample the same distribution; batched is the fast path for the
full-scale regimes where tens of millions of competitors oversubscribe a
few thousand sites.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .constants import AVOGADRO
from .params import RegimeConfig, derived_area


class ConfigTooLarge(Exception):
    """Expected molecule count exceeds what the Poisson sampler supports."""


_POISSON_MEAN_MAX = 2.0**63
# numpy's hypergeometric sampler caps its arguments at 1e9; above that the
# without-replacement correction is < b/total ~ 1e-4 and a binomial split
# of the interleave is indistinguishable in practice.
_HYPERGEOM_MAX = 10**9 - 1
_DENSE_SITE_LIMIT = 1 << 23   # site maps above this use a hash set
_EXACT_CHUNK = 1 << 16        # stream chunk for the exact mode
_AUTO_BATCH_THRESHOLD = 1_000_000


@dataclass(frozen=True)
class ExposureDraw:
    """Molecule counts present during one exposure window."""

    n_target: int
    n_background: int
    mean_target: float
    mean_background: float


@dataclass(frozen=True)
class BoundFragment:
    kind: str      # "target" or "background"
    n_bp: int
    z: float


@dataclass(frozen=True)
class BoundPopulation:
    """Outcome of one site-assignment pass.

    Lengths are stored per class; the fragment list view is materialized on
    demand so full-scale draws stay array-backed.
    """

    target_lengths: np.ndarray       # int64 base-pair counts, one per bound target
    background_lengths: np.ndarray
    n_sites: int
    z_target: float
    z_background: float

    @property
    def k_target(self) -> int:
        return int(self.target_lengths.size)

    @property
    def k_background(self) -> int:
        return int(self.background_lengths.size)

    @property
    def k_total(self) -> int:
        return self.k_target + self.k_background

    @property
    def target_bp_total(self) -> int:
        return int(self.target_lengths.sum())

    @property
    def background_bp_total(self) -> int:
        return int(self.background_lengths.sum())

    @property
    def fragments(self) -> list[BoundFragment]:
        out = [BoundFragment("target", int(n), self.z_target)
               for n in self.target_lengths]
        out += [BoundFragment("background", int(n), self.z_background)
                for n in self.background_lengths]
        return out


def site_count(config: RegimeConfig) -> int:
    """Number of receptor sites, rho_r * area rounded to nearest (ties-to-even)."""
    n = round(config.rho_r * derived_area(config))
    if n < 1:
        raise ValueError(
            f"receptor density and area give {n} binding sites; need at least 1"
        )
    return int(n)


def expected_counts(config: RegimeConfig) -> tuple[float, float]:
    """Expected target and background molecule counts in the exposure volume."""
    mean_t = config.c_target * config.v_sample * AVOGADRO
    mean_c = config.c_background * config.v_sample * AVOGADRO
    return mean_t, mean_c


def draw_exposure(config: RegimeConfig, rng: np.random.Generator) -> ExposureDraw:
    """Poisson molecule counts for one exposure window."""
    mean_t, mean_c = expected_counts(config)
    if mean_t >= _POISSON_MEAN_MAX or mean_c >= _POISSON_MEAN_MAX:
        raise ConfigTooLarge(
            f"expected molecule count {max(mean_t, mean_c):.3g} exceeds 2^63"
        )
    n_t = int(rng.poisson(mean_t)) if mean_t > 0 else 0
    n_c = int(rng.poisson(mean_c)) if mean_c > 0 else 0
    return ExposureDraw(n_target=n_t, n_background=n_c,
                        mean_target=mean_t, mean_background=mean_c)


def _interleave_split(rng: np.random.Generator, rem_t: int, rem_c: int, b: int) -> int:
    """Targets among the next b molecules of a uniform random interleave."""
    if rem_t == 0:
        return 0
    if rem_c == 0:
        return b
    total = rem_t + rem_c
    if total > _HYPERGEOM_MAX:
        return int(rng.binomial(b, rem_t / total))
    return int(rng.hypergeometric(rem_t, rem_c, b))


def _class_split(rng: np.random.Generator, n_target_pool: int,
                 n_background_pool: int, n_picked: int) -> int:
    """Targets among n_picked exchangeable items from a two-class pool."""
    if n_picked == 0 or n_target_pool == 0:
        return 0
    if n_background_pool == 0:
        return n_picked
    return int(rng.hypergeometric(n_target_pool, n_background_pool, n_picked))


def _fill_sites(draw: ExposureDraw, config: RegimeConfig, n_sites: int,
                rng: np.random.Generator, explicit_weights: bool,
                chunk: int) -> tuple[int, int]:
    """Run the site-assignment pass; returns bound counts (k_target, k_background).

    Attempt classes within a chunk are exchangeable and independent of the
    site choices, so the winners' class split is an exact hypergeometric
    draw; per-attempt class labels never need materializing.
    """
    wt_lo, wt_hi = config.target_weight_range
    wc_lo, wc_hi = config.background_weight_range
    dense = n_sites <= _DENSE_SITE_LIMIT
    occupied_map = np.zeros(n_sites, dtype=bool) if dense else set()
    slot = np.full(n_sites, -1, dtype=np.int64) if dense else None
    k_t = 0
    k_c = 0
    k = 0
    rem_t = draw.n_target
    rem_c = draw.n_background
    while rem_t + rem_c > 0 and k < n_sites:
        b = min(chunk, rem_t + rem_c)
        n_t = _interleave_split(rng, rem_t, rem_c, b)
        n_c = b - n_t
        if explicit_weights:
            a_t = int(np.count_nonzero(
                rng.random(n_t) < rng.uniform(wt_lo, wt_hi, n_t))) if n_t else 0
            a_c = int(np.count_nonzero(
                rng.random(n_c) < rng.uniform(wc_lo, wc_hi, n_c))) if n_c else 0
        else:
            a_t = int(rng.binomial(n_t, 0.5 * (wt_lo + wt_hi))) if n_t else 0
            a_c = int(rng.binomial(n_c, 0.5 * (wc_lo + wc_hi))) if n_c else 0
        n_att = a_t + a_c
        if n_att:
            sites = rng.integers(0, n_sites, size=n_att)
            if dense:
                # Earliest attempt per distinct site wins if the site is
                # free.  Duplicate fancy-index assignment keeps the last
                # write, so writing in reverse leaves the first attempt's
                # index in the slot.
                order = np.arange(n_att)
                slot[sites[::-1]] = order[::-1]
                winners = slot[sites] == order
                winners &= ~occupied_map[sites]
                new_sites = sites[winners]
                occupied_map[new_sites] = True
                slot[sites] = -1
                new_total = int(new_sites.size)
            else:
                new_total = 0
                for site in sites.tolist():
                    if site not in occupied_map:
                        occupied_map.add(site)
                        new_total += 1
            new_t = _class_split(rng, a_t, a_c, new_total)
            k_t += new_t
            k_c += new_total - new_t
            k += new_total
        rem_t -= n_t
        rem_c -= n_c
    return k_t, k_c


def _draw_lengths(k_t: int, k_c: int, config: RegimeConfig,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    t_lo, t_hi = config.target_bp_range
    c_lo, c_hi = config.background_bp_range
    t_len = rng.integers(t_lo, t_hi, size=k_t, endpoint=True)
    c_len = rng.integers(c_lo, c_hi, size=k_c, endpoint=True)
    return t_len.astype(np.int64), c_len.astype(np.int64)


def _assign(draw: ExposureDraw, config: RegimeConfig, rng: np.random.Generator,
            length_rng: np.random.Generator | None, explicit_weights: bool,
            chunk: int) -> BoundPopulation:
    n_sites = site_count(config)
    k_t, k_c = _fill_sites(draw, config, n_sites, rng, explicit_weights, chunk)
    t_len, c_len = _draw_lengths(k_t, k_c, config,
                                 length_rng if length_rng is not None else rng)
    return BoundPopulation(target_lengths=t_len, background_lengths=c_len,
                           n_sites=n_sites, z_target=config.z_target,
                           z_background=config.z_background)


def assign_sites_exact(draw: ExposureDraw, config: RegimeConfig,
                       rng: np.random.Generator,
                       length_rng: np.random.Generator | None = None) -> BoundPopulation:
    """Site assignment with every molecule's weight drawn explicitly."""
    return _assign(draw, config, rng, length_rng,
                   explicit_weights=True, chunk=_EXACT_CHUNK)


def assign_sites_batched(draw: ExposureDraw, config: RegimeConfig,
                         rng: np.random.Generator,
                         length_rng: np.random.Generator | None = None) -> BoundPopulation:
    """Site assignment in batches with weights marginalized analytically."""
    return _assign(draw, config, rng, length_rng,
                   explicit_weights=False, chunk=config.batch_size)


def assign_sites(draw: ExposureDraw, config: RegimeConfig,
                 rng: np.random.Generator,
                 length_rng: np.random.Generator | None = None) -> BoundPopulation:
    """Mode dispatch: exact, batched, or size-based auto selection."""
    mode = config.occupancy_mode
    if mode == "auto":
        total = draw.n_target + draw.n_background
        mode = "batched" if total > _AUTO_BATCH_THRESHOLD else "exact"
    if mode == "exact":
        return assign_sites_exact(draw, config, rng, length_rng)
    return assign_sites_batched(draw, config, rng, length_rng)
