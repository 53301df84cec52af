"""Scenario orchestration: validate, solve, rays, transport, diagnose."""

from dataclasses import dataclass, field

import numpy as np

from . import domain as dm
from . import lax_hopf as lh
from . import rays as rf
from . import transport as tp
from .convex import equivalence_constants
from .grid import ScalarField, make_grid

EXIT_OK, EXIT_DATUM, EXIT_NUMERICAL = 0, 2, 3


@dataclass
class PipelineResult:
    config: object
    status: int
    domain: object
    body: object
    samples: object
    datum_report: object
    uphi: object = None
    uf: object = None
    rays: object = None
    sets: object = None
    source: object = None
    support: object = None
    transport: object = None
    residuals: list = None
    witness: object = None
    xphi: object = None
    diagnosis: object = None
    flags: list = field(default_factory=list)
    constants: tuple = (1.0, 1.0)


def _source_field(grid, fn, mask):
    vals = np.asarray(fn(grid.points()), dtype=float)
    return ScalarField(grid, np.where(mask, vals, np.nan), mask.copy())


def validate_scenario(cfg):
    """Domain, body, samples and the datum compatibility report."""
    domain = cfg.build_domain()
    body = cfg.build_body()
    samples = dm.sample_boundary(domain, cfg.samples, cfg.datum_function())
    report = dm.validate_datum(domain, samples, body)
    status = EXIT_OK if report.is_compatible else EXIT_DATUM
    return PipelineResult(cfg, status, domain, body, samples, report,
                          constants=equivalence_constants(body))


def numerical_flags(res):
    """Names of failed numerical sanity checks."""
    flags = []
    h = res.uphi.grid.h
    m = res.uphi.mask
    if not np.all(np.isfinite(res.uphi.values[m])):
        flags.append("uphi_nonfinite")
    if res.uf is not None and not np.all(np.isfinite(res.uf.values[m])):
        flags.append("uf_nonfinite")
    if res.xphi is not None:
        c2 = res.constants[1]
        if res.xphi.boundary_error > 2.0 * h * c2:
            flags.append("uphi_boundary_mismatch")
        # chords of curved boundaries carry the datum slightly steeper
        lo, hi = res.domain.bbox
        slack = 1e-6 + res.domain.length_defect * c2 * float(np.hypot(*(hi - lo)))
        if res.xphi.lipschitz_violation > slack:
            flags.append("uphi_lipschitz_violation")
    if res.transport is not None:
        v = res.transport.v.values[res.transport.v.mask]
        if not np.all(np.isfinite(v)):
            flags.append("vf_nonfinite")
        elif len(v) and v.min() < -1e-9:
            flags.append("vf_negative")
    return flags


def run_pipeline(cfg, stage="diagnose", seed=0):
    """Run the stages up to ``stage`` (``validate``, ``solve`` or ``diagnose``).

    Returns a :class:`PipelineResult` whose ``status`` is the exit code: 0 on
    success, 2 when the datum fails the compatibility test, 3 when a
    numerical sanity check fails.
    """
    res = validate_scenario(cfg)
    if stage == "validate" or res.status != EXIT_OK:
        return res
    tol = cfg.tolerances
    domain, body, samples = res.domain, res.body, res.samples
    grid = make_grid(domain, cfg.h)
    try:
        res.uphi = lh.solve_uphi(domain, samples, body, grid=grid, delta=tol.get("delta"))
    except lh.NoVisibleBoundary as exc:
        res.status = EXIT_NUMERICAL
        res.flags = [f"no_visible_boundary: {exc}"]
        return res
    uphi = res.uphi
    res.xphi = lh.check_xphi_membership(uphi, domain, samples, body, seed=seed)
    res.rays = rf.ray_field(domain, samples, body, uphi, tol=tol.get("linearity"))
    sigma = rf.detect_sigma(uphi, body, tol.get("sigma", rf.SIGMA_TOL))
    res.sets = rf.detect_singular_sets(domain, samples, body, uphi, res.rays, sigma=sigma)
    src_fn = cfg.source_function()
    res.source = _source_field(grid, src_fn, uphi.mask)
    res.support = tp.support_mask(grid, src_fn, uphi.mask)
    res.uf = lh.solve_uf(domain, samples, body, grid, uphi, res.support)
    geo = tp.direction_divergence(uphi, body, sigma_mask=sigma[0], rays=res.rays)
    v = tp.solve_vf(uphi, res.rays, res.source, geo.div_theta, method=cfg.alpha_method,
                    domain=domain, samples=samples, body=body)
    res.transport = tp.TransportSolution(v, geo.theta, geo.div_theta, cfg.alpha_method)
    if stage == "diagnose":
        tests = tp.bump_tests(domain)
        res.residuals = tp.weak_residual(v, geo.theta, res.source, tests)
        wres = None
        if cfg.witness and res.sets.t_measure_estimate > tp.t_tolerance(domain, grid.h):
            res.witness = tp.nonuniqueness_witness(domain, samples, body, uphi, res.sets,
                                                   geo.theta, tests=tests, rays=res.rays)
            wres = res.witness.residuals
        res.diagnosis = tp.diagnose(domain, uphi, res.uf, v, res.sets, res.source,
                                    res.support, res.residuals, wres)
    res.flags = numerical_flags(res)
    if res.flags:
        res.status = EXIT_NUMERICAL
    return res
