"""
One suite per subcommand. A suite reads its declared parameters, runs
its experiment and records named pass/fail checks on the report.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Awaitable, Callable, TypeVar

import anyio
import anyio.to_thread
import numpy as np

from orbitbox.asymptotics import (
    a_n,
    b_n,
    divergence_report,
    log_binomial,
    normalized_exponent,
    split_sums,
    stirling_band_sweep,
    tail_threshold,
)
from orbitbox.base import (
    ConfigError,
    PreconditionError,
    WitnessMismatchError,
)
from orbitbox.criteria import (
    CriterionWitness,
    RPlusKind,
    SpectrumDescriptor,
    SpectrumKind,
    classify_rplus,
    combine_witnesses,
    ray_obstruction_check,
    scaled_shift_witness,
    slice_map_check,
    spectrum_of_adjoint,
    su_orbit_identity_check,
    su_similarity_check,
    su_similarity_obstruction,
    telescoping_check,
    verify_criterion,
)
from orbitbox.cyclicity import (
    direct_sum_cyclicity,
    krylov_rank,
    phi_annihilation_check,
    ratio_structure_check,
    roots_of_unity_instance,
    square_cyclicity_search,
    vandermonde_span_rank,
    volterra_intertwine_residual,
)
from orbitbox.experiments.config import (
    ExperimentConfig,
    Param,
    resolve_params,
)
from orbitbox.experiments.report import Report
from orbitbox.operators import (
    DenseMatrix,
    DirectSum,
    ExtensionSu,
    Identity,
    MatrixExponential,
    OperatorModel,
    Rotation2D,
    ScalarMultiple,
    VolterraQuadrature,
    WeightedBackwardShift,
    as_vector,
    basis_vector,
    expm,
    materialize,
    salas_operator,
)
from orbitbox.orbit import (
    CoverageMode,
    coupled_coverage,
    coupled_orbit,
    coverage,
    finite_power_experiment,
    orbit,
    orbit_shift_residual,
    sphere_net,
)
from orbitbox.torus import (
    TorusPoint,
    brute_force_powers,
    closure_of_powers,
    is_generator,
    power_coverage,
)
from orbitbox.winding import (
    concatenate,
    lemma_map_demo,
    omit_point_bound_check,
    random_avoiding_path,
    random_path,
    reparametrize,
    scale,
    winding,
    winding_with_flag,
)

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SQRT2_MINUS_1 = math.sqrt(2.0) - 1.0

T = TypeVar("T")

SuiteFn = Callable[
    [ExperimentConfig, dict[str, Any], Report], Awaitable[None]
]


@dataclass(frozen=True)
class Suite:
    name: str
    summary: str
    run: SuiteFn
    params: dict[str, Param]
    uses_operator: bool = False


SUITES: dict[str, Suite] = {}


def suite(
    name: str, summary: str, uses_operator: bool = False, **params: Param
) -> Callable[[SuiteFn], SuiteFn]:
    def register(fn: SuiteFn) -> SuiteFn:
        SUITES[name] = Suite(name, summary, fn, params, uses_operator)
        return fn

    return register


async def run_suite(config: ExperimentConfig) -> Report:
    s = SUITES[config.experiment]
    if config.operator is not None and not s.uses_operator:
        raise ConfigError(f"{s.name} takes no operator", "operator")
    params = resolve_params(config, s.params)
    report = Report(config.experiment, config.seed, config.echo())
    logger.info(f"running {s.name} with seed {config.seed}")
    await s.run(config, params, report)
    logger.info(
        f"{s.name}: {sum(report.checks.values())}/{len(report.checks)} "
        "checks passed"
    )
    return report


async def sweep(
    fn: Callable[[int, int], T], count: int, seed: int, jobs: int = 1
) -> list[T]:
    """fn(index, instance_seed) for each instance on worker threads.

    Instance seeds come from one SeedSequence and results are slotted
    by index, so the output does not depend on `jobs`.
    """
    seeds = np.random.SeedSequence(seed).generate_state(max(count, 1))
    results: list[Any] = [None] * count
    limiter = anyio.CapacityLimiter(jobs)

    async def one(i: int) -> None:
        try:
            results[i] = await anyio.to_thread.run_sync(
                fn, i, int(seeds[i]), limiter=limiter
            )
        except Exception as e:
            logger.error(f"instance {i} failed: {e}", exc_info=True)
            raise

    async with anyio.create_task_group() as tg:
        for i in range(count):
            tg.start_soon(one, i)
    return results


def _start_vector(value: list | None, model: OperatorModel) -> np.ndarray:
    if value is None:
        x = np.ones(model.dim)
        return x / np.linalg.norm(x)
    try:
        x = as_vector(value)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), "params.x") from e
    if x.shape[0] != model.dim:
        raise ConfigError(
            f"operator acts on {model.dim} coordinates, x has {x.shape[0]}",
            "params.x",
        )
    return x


def _mode(value: str) -> CoverageMode:
    try:
        return CoverageMode(value)
    except ValueError:
        raise ConfigError(
            f"expected one of {[m.value for m in CoverageMode]}",
            "params.mode",
        ) from None


@suite(
    "orbit-coverage",
    "epsilon-net coverage by an orbit",
    uses_operator=True,
    n=Param(int, 2000, 1),
    net_size=Param(int, 500, 1),
    epsilon=Param(float, 0.05),
    mode=Param(str, "plain"),
    x=Param(list, None),
    min_fraction=Param(float, 0.99, 0),
)
async def orbit_coverage(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    model = config.operator or Rotation2D(GOLDEN)
    x = _start_vector(p["x"], model)
    mode = _mode(p["mode"])
    net = sphere_net(model.dim, p["net_size"], config.seed, model.field)
    points = orbit(model, x, p["n"])
    cov = coverage(points, net, p["epsilon"], mode, config.seed)
    shift = orbit_shift_residual(model, x, min(p["n"], 200))
    leaked = max(pt.leaked for pt in points)
    report.results.update(
        coverage=cov.to_dict(), shift_residual=shift, max_leaked=leaked
    )
    report.header = ["prefix", "fraction"]
    report.rows = [[k, f] for k, f in enumerate(cov.curve)]
    report.check("coverage", cov.fraction >= p["min_fraction"])
    report.check("orbit_shift", shift <= 1e-9)
    report.check(
        "curve_monotone",
        all(a <= b for a, b in zip(cov.curve, cov.curve[1:])),
    )


@suite(
    "coupled-orbit",
    "coverage of X x G by (T^k x, g^k) with g of order q",
    uses_operator=True,
    q=Param(int, 3, 1),
    n=Param(int, 6000, 1),
    net_size=Param(int, 300, 1),
    epsilon=Param(float, 0.05),
    mode=Param(str, "plain"),
    x=Param(list, None),
    min_fraction=Param(float, 0.99, 0),
)
async def coupled(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    model = config.operator or Rotation2D(GOLDEN)
    x = _start_vector(p["x"], model)
    q = p["q"]
    g = TorusPoint.exact(Fraction(1, q))
    pairs = coupled_orbit(model, x, g, p["n"])
    rng = np.random.default_rng([config.seed, 1])
    net = sphere_net(model.dim, p["net_size"], config.seed, model.field)
    labels = rng.integers(0, q, size=len(net))
    net_pairs = [(y, g * int(j)) for y, j in zip(net, labels)]
    cov = coupled_coverage(
        pairs, net_pairs, p["epsilon"], _mode(p["mode"]), config.seed
    )
    group = closure_of_powers(g)
    report.results.update(coverage=cov.to_dict(), group=group.to_dict())
    report.header = ["prefix", "fraction"]
    report.rows = [[k, f] for k, f in enumerate(cov.curve)]
    report.check("coverage", cov.fraction >= p["min_fraction"])
    report.check(
        "powers_in_closure", all(group.contains(h) for _, h in pairs)
    )


@suite(
    "torus-closure",
    "closures of powers against brute force; irrational rotations",
    count=Param(int, 100, 1),
    max_k=Param(int, 3, 1),
    max_den=Param(int, 12, 1),
    n=Param(int, 100_000, 1),
    net_size=Param(int, 2000, 1),
    epsilon=Param(float, 1e-3),
    min_fraction=Param(float, 0.999, 0),
)
async def torus_closure(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    def instance(i: int, seed: int) -> dict[str, Any]:
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, p["max_k"] + 1))
        dens = rng.integers(1, p["max_den"] + 1, size=k)
        z = TorusPoint.exact(
            *[Fraction(int(rng.integers(0, d)), int(d)) for d in dens]
        )
        desc = closure_of_powers(z)
        brute = brute_force_powers(z)
        ok = (
            desc.finite
            and desc.order == len(brute)
            and set(desc.elements()) == set(brute)
        )
        return {"k": k, "order": desc.order, "ok": ok}

    runs = await sweep(instance, p["count"], config.seed, config.jobs)
    cov = power_coverage(
        TorusPoint.approx(SQRT2_MINUS_1),
        p["n"],
        p["net_size"],
        p["epsilon"],
        config.seed,
    )
    examples = {
        "1/3": closure_of_powers(TorusPoint.exact("1/3")).order,
        "1/2,1/4": closure_of_powers(TorusPoint.exact("1/2", "1/4")).order,
    }
    sqrt2 = is_generator(TorusPoint.approx(SQRT2_MINUS_1))
    golden = is_generator(TorusPoint.approx(GOLDEN))
    report.results.update(
        instances=runs,
        coverage=cov.to_dict(),
        examples=examples,
        sqrt2_minus_1=sqrt2.to_dict(),
        golden=golden.to_dict(),
    )
    report.header = ["instance", "k", "order", "ok"]
    report.rows = [
        [i, r["k"], r["order"], r["ok"]] for i, r in enumerate(runs)
    ]
    report.check("closure_matches_brute_force", all(r["ok"] for r in runs))
    report.check("irrational_coverage", cov.fraction >= p["min_fraction"])
    report.check("examples", examples == {"1/3": 3, "1/2,1/4": 4})
    report.check(
        "irrational_generators", sqrt2.generator and golden.generator
    )


def _reparam_grid(
    times: np.ndarray, lam: float, count: int
) -> tuple[np.ndarray, np.ndarray]:
    """h(t) = (1 - lam) t + lam t^2 on a grid holding h^-1 of every
    original sample time."""

    def h(t: np.ndarray) -> np.ndarray:
        return (1.0 - lam) * t + lam * t * t

    def h_inv(s: np.ndarray) -> np.ndarray:
        a = 1.0 - lam
        return (-a + np.sqrt(a * a + 4.0 * lam * s)) / (2.0 * lam)

    grid = np.unique(
        np.concatenate([np.linspace(0.0, 1.0, count), h_inv(times)])
    )
    grid[0], grid[-1] = 0.0, 1.0
    return grid, h(grid)


@suite(
    "winding-props",
    "additivity, reparametrization and scaling invariance of winding",
    seeds=Param(int, 1000, 1),
    samples=Param(int, 64, 8),
)
async def winding_props(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    samples = p["samples"]

    def instance(i: int, seed: int) -> dict[str, Any]:
        rng = np.random.default_rng(seed)
        path = random_path(rng, samples)
        other = random_path(rng, samples)
        other = scale(path.end - other.start, other)
        w = winding(path)
        additivity = abs(
            winding(concatenate(path, other)) - w - winding(other)
        )
        grid, mapped = _reparam_grid(
            path.times, float(rng.uniform(0.05, 0.9)), 4 * samples
        )
        reparam = abs(winding(reparametrize(path, grid, mapped)) - w)
        scaling = abs(winding(scale(float(rng.uniform(-3, 3)), path)) - w)
        _, snapped = winding_with_flag(
            random_path(rng, samples, closed=True)
        )
        z0 = float(rng.uniform())
        bounded = omit_point_bound_check(
            random_avoiding_path(rng, z0, samples), z0
        )
        return {
            "additivity": additivity,
            "reparametrization": reparam,
            "scaling": scaling,
            "snapped": snapped,
            "omit_bound": bounded,
        }

    runs = await sweep(instance, p["seeds"], config.seed, config.jobs)
    worst = {
        key: max(r[key] for r in runs)
        for key in ("additivity", "reparametrization", "scaling")
    }
    report.results.update(
        instances=len(runs),
        max_residuals=worst,
        closed_snapped=sum(r["snapped"] for r in runs),
        omit_bound_held=sum(r["omit_bound"] for r in runs),
    )
    report.header = [
        "instance",
        "additivity",
        "reparametrization",
        "scaling",
        "snapped",
        "omit_bound",
    ]
    report.rows = [
        [
            i,
            r["additivity"],
            r["reparametrization"],
            r["scaling"],
            r["snapped"],
            r["omit_bound"],
        ]
        for i, r in enumerate(runs)
    ]
    for key, value in worst.items():
        report.check(key, value <= 1e-12)
    report.check("closed_paths_snap", all(r["snapped"] for r in runs))
    report.check("omit_point_bound", all(r["omit_bound"] for r in runs))


@suite(
    "lemma-map-demo",
    "winding of the orbit path under multiplication by z",
    z_turns=Param((str, float), "1/3"),
    m=Param(int, 7, 1),
    samples=Param(int, 64, 3),
)
async def lemma_map(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    z = p["z_turns"]
    if isinstance(z, str):
        try:
            z = Fraction(z)
        except ValueError:
            raise ConfigError(
                f"not a fraction: {z!r}", "params.z_turns"
            ) from None
    try:
        demo = lemma_map_demo(z, p["m"], p["samples"])
    except PreconditionError as e:
        raise ConfigError(str(e), "params.m") from e
    report.results.update(demo.to_dict())
    report.header = ["segment", "winding"]
    report.rows = [[j + 1, w] for j, w in enumerate(demo.segments)]
    report.check("middle_section_identity", demo.residual <= 1e-12)
    report.check("winds_past_two", demo.bound_ok)


def _shift_tests(dim: int, indices: range) -> list[np.ndarray]:
    if indices[-1] + 4 >= dim:
        raise ConfigError(
            f"window of {dim} is too small for n_k up to {indices[-1]}",
            "params.dim",
        )
    return [basis_vector(dim, j) for j in range(4)]


@suite(
    "sc-criterion",
    "criterion residuals for 2B, an unbalanced witness and the identity",
    dim=Param(int, 64, 8),
    start=Param(int, 30, 1),
    count=Param(int, 11, 1),
    tol=Param(float, 1e-8),
    factor=Param(float, 2.0),
)
async def sc_criterion(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    dim = p["dim"]
    idx = range(p["start"], p["start"] + p["count"])
    tests = _shift_tests(dim, idx)
    if not p["factor"] > 1:
        raise ConfigError("must exceed 1", "params.factor")

    model, wit = scaled_shift_witness(
        p["factor"], dim, idx, [1.0] * len(idx), tests, tests
    )
    balanced = verify_criterion(model, wit, 0, p["tol"])

    _, heavy = scaled_shift_witness(
        p["factor"],
        dim,
        idx,
        [4.0**n for n in idx],
        [basis_vector(dim, dim - 1)],
        tests,
    )
    unbalanced = verify_criterion(model, heavy, 0, p["tol"])

    ident = Identity(dim)
    still = CriterionWitness.single(
        idx, [1.0] * len(idx), tests, tests, [ident] * len(idx)
    )
    identity = verify_criterion(ident, still, 0, p["tol"])

    report.results.update(
        balanced=balanced.to_dict(),
        unbalanced=unbalanced.to_dict(),
        identity=identity.to_dict(),
    )
    report.header = ["k", "n_k", "r1", "r2", "r3"]
    report.rows = balanced.csv_rows()
    report.check("balanced_passes", balanced.passed)
    report.check("r1_exactly_zero", all(r == 0.0 for r in balanced.r1))
    report.check("unbalanced_fails", not unbalanced.passed)
    report.check("identity_fails", not identity.passed)


@suite(
    "combine-witnesses",
    "direct-sum witnesses reproduce componentwise maxima",
    dim=Param(int, 64, 8),
    start=Param(int, 30, 1),
    count=Param(int, 11, 1),
    tol=Param(float, 1e-8),
)
async def combine(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    dim = p["dim"]
    idx = range(p["start"], p["start"] + p["count"])
    tests = _shift_tests(dim, idx)
    ones = [1.0] * len(idx)
    m2, w2 = scaled_shift_witness(2.0, dim, idx, ones, tests, tests)
    m3, w3 = scaled_shift_witness(3.0, dim, idx, ones, tests, tests)
    r2 = verify_criterion(m2, w2, 0, p["tol"])
    r3 = verify_criterion(m3, w3, 0, p["tol"])

    mixed = verify_criterion(
        DirectSum((m2, m3)), combine_witnesses([w2, w3]), 0, p["tol"]
    )
    twin = verify_criterion(
        DirectSum((m2, m2)), combine_witnesses([w2, w2]), 0, p["tol"]
    )
    expected = tuple(
        tuple(max(a, b) for a, b in zip(x, y))
        for x, y in ((r2.r1, r3.r1), (r2.r2, r3.r2), (r2.r3, r3.r3))
    )
    later = range(p["start"] + 1, p["start"] + 1 + p["count"])
    shifted = scaled_shift_witness(2.0, dim, later, ones, tests, tests)[1]
    try:
        combine_witnesses([w2, shifted])
        rejected = False
    except WitnessMismatchError:
        rejected = True

    report.results.update(
        two_b=r2.to_dict(), three_b=r3.to_dict(), combined=mixed.to_dict()
    )
    report.header = ["k", "n_k", "r1", "r2", "r3"]
    report.rows = mixed.csv_rows()
    report.check(
        "componentwise_max_exact", (mixed.r1, mixed.r2, mixed.r3) == expected
    )
    report.check(
        "twin_equals_single",
        (twin.r1, twin.r2, twin.r3) == (r2.r1, r2.r2, r2.r3),
    )
    report.check("combined_passes", mixed.passed)
    report.check("mismatch_rejected", rejected)


def _rplus_fixtures() -> list[tuple[str, bool, SpectrumDescriptor, str]]:
    shift = WeightedBackwardShift.from_rule("exp2decay", 16)
    three_sevenths = cmath.exp(2j * math.pi * 3 / 7)
    return [
        ("backward_shift", True, spectrum_of_adjoint(shift), "rplus"),
        (
            "volterra",
            True,
            spectrum_of_adjoint(VolterraQuadrature(32)),
            "rplus",
        ),
        ("minus_two", True, SpectrumDescriptor.singleton(-2), "not"),
        ("minus_one", True, SpectrumDescriptor.singleton(-1), "not"),
        ("i", True, SpectrumDescriptor.singleton(1j), "not"),
        (
            "three_sevenths",
            True,
            SpectrumDescriptor.singleton(
                three_sevenths, TorusPoint.exact("3/7")
            ),
            "not",
        ),
        (
            "irrational",
            True,
            SpectrumDescriptor.singleton(cmath.exp(2j * math.pi * GOLDEN)),
            "rplus",
        ),
        (
            "extension_su",
            True,
            spectrum_of_adjoint(ExtensionSu(shift, np.ones(16))),
            "not",
        ),
        (
            "dense",
            True,
            spectrum_of_adjoint(DenseMatrix(np.diag([2.0, 3.0]))),
            "indeterminate",
        ),
        (
            "not_assumed",
            False,
            SpectrumDescriptor.empty(),
            "indeterminate",
        ),
    ]


_EXPECTED = {
    "rplus": RPlusKind.RPLUS_SUPERCYCLIC,
    "not": RPlusKind.NOT_RPLUS,
    "indeterminate": RPlusKind.INDETERMINATE,
}


@suite(
    "rplus-classify",
    "R+-supercyclicity dichotomy on a fixture table",
    scale=Param(float, 7.5),
)
async def rplus_classify(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    if not p["scale"] > 0:
        raise ConfigError("must be positive", "params.scale")
    table = []
    for name, assumed, spectrum, expected in _rplus_fixtures():
        verdict = classify_rplus(assumed, spectrum)
        scaled = verdict
        if spectrum.kind is SpectrumKind.SINGLETON:
            scaled = classify_rplus(
                assumed,
                SpectrumDescriptor.singleton(
                    p["scale"] * spectrum.z, spectrum.phase
                ),
            )
        table.append(
            {
                "fixture": name,
                "expected": _EXPECTED[expected].value,
                "verdict": verdict.verdict.value,
                "certainty": verdict.certainty,
                "reason": verdict.reason,
                "scaled_verdict": scaled.verdict.value,
            }
        )
        report.check(name, verdict.verdict is _EXPECTED[expected])
    report.results["fixtures"] = table
    report.header = ["fixture", "expected", "verdict", "certainty"]
    report.rows = [
        [r["fixture"], r["expected"], r["verdict"], r["certainty"]]
        for r in table
    ]
    report.check(
        "positive_scaling_invariant",
        all(r["verdict"] == r["scaled_verdict"] for r in table),
    )


@suite(
    "ray-obstruction",
    "phases of f(T^n x) for finite and infinite order z/|z|",
    n_max=Param(int, 100, 2),
)
async def ray_obstruction(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    e0 = np.array([1.0, 0.0])
    x = np.array([1.0, 1.0])
    seventh = cmath.exp(2j * math.pi * 3 / 7)
    irrational = cmath.exp(2j * math.pi * GOLDEN)
    fixtures = [
        ("minus_one", DenseMatrix(np.diag([-1.0, 0.5])), -1.0, None, 2),
        ("i", DenseMatrix(np.diag([1j, 0.3])), 1j, None, 4),
        (
            "three_sevenths",
            DenseMatrix(np.diag([seventh, 0.2])),
            seventh,
            TorusPoint.exact("3/7"),
            7,
        ),
        (
            "irrational",
            DenseMatrix(np.diag([irrational, 0.4])),
            irrational,
            None,
            None,
        ),
    ]
    results = {}
    for name, model, z, phase, order in fixtures:
        r = ray_obstruction_check(
            model, e0, z, x, p["n_max"], (1.0, 2.5), phase=phase
        )
        results[name] = r.to_dict()
        if order is None:
            report.check(
                name,
                not r.applicable and r.distinct_phases > r.distinct_at_half,
            )
        else:
            report.check(
                name,
                r.applicable
                and r.order == order
                and bool(r.obstruction_holds),
            )
    report.results["fixtures"] = results
    report.header = ["fixture", "applicable", "order", "distinct_phases"]
    report.rows = [
        [k, v["applicable"], v["order"], v["distinct_phases"]]
        for k, v in results.items()
    ]


@suite(
    "su-identities",
    "telescoping, S_u orbit, similarity, ratio, shift and slice identities",
    count=Param(int, 200, 1),
    max_dim=Param(int, 20, 2),
    max_power=Param(int, 50, 1),
)
async def su_identities(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    def instance(i: int, seed: int) -> dict[str, float]:
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, p["max_dim"] + 1))
        n = int(rng.integers(1, p["max_power"] + 1))
        entries = rng.standard_normal((d, d)) / (2.0 * math.sqrt(d))
        s = DenseMatrix(entries)
        x, y, u, v = rng.standard_normal((4, d))
        w, vecs = np.linalg.eig(entries.conj().T)
        top = int(np.argmax(np.abs(w)))
        complex_s = DenseMatrix(entries.astype(complex))
        return {
            "telescoping": telescoping_check(s, x, n).relative,
            "su_orbit": su_orbit_identity_check(s, u, y, n).relative,
            "similarity": su_similarity_check(s, v).relative,
            "orbit_shift": orbit_shift_residual(s, x, n),
            "ratio_structure": ratio_structure_check(
                s, (1, 1j, 2), x, n
            ),
            "slice_map": slice_map_check(
                complex_s, vecs[:, top], np.conj(w[top]), 4, seed
            ).relative,
        }

    runs = await sweep(instance, p["count"], config.seed, config.jobs)
    limits = {
        "telescoping": 1e-10,
        "su_orbit": 1e-9,
        "similarity": 1e-11,
        "orbit_shift": 1e-9,
        "ratio_structure": 1e-9,
        "slice_map": 1e-9,
    }
    worst = {k: max(r[k] for r in runs) for k in limits}
    fixed = su_orbit_identity_check(
        DenseMatrix(np.array([[0.0]])), np.array([1.0]), np.array([0.3]), 2
    )
    salas = salas_operator("unit", 8)
    obstruction = su_similarity_obstruction(
        salas, basis_vector(8, 7), 32, config.seed
    )
    report.results.update(
        max_relative=worst,
        scalar_fixed_point=fixed.to_dict(),
        similarity_obstruction=obstruction.to_dict(),
    )
    report.header = ["instance", *limits]
    report.rows = [[i, *[r[k] for k in limits]] for i, r in enumerate(runs)]
    for k, limit in limits.items():
        report.check(k, worst[k] <= limit)
    report.check("scalar_fixed_point", fixed.residual == 0.0)
    report.check(
        "similarity_obstruction", obstruction.optimum_residual >= 0.5
    )


@suite(
    "krylov",
    "Krylov rank of an operator from a start vector",
    uses_operator=True,
    x=Param(list, None),
    tol=Param(float, 1e-8),
    expect_cyclic=Param(bool, None),
)
async def krylov(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    model = config.operator or DenseMatrix(np.diag([1.0, 2.0, 3.0]))
    x = _start_vector(p["x"], model)
    mat = materialize(model)
    full = krylov_rank(mat, x, p["tol"])
    ranks = [
        krylov_rank(mat, x, p["tol"], powers=k).rank
        for k in range(1, model.dim + 1)
    ]
    report.results.update(krylov=full.to_dict(), ranks_by_powers=ranks)
    report.header = ["powers", "rank"]
    report.rows = [[k + 1, r] for k, r in enumerate(ranks)]
    report.check("rank_bounded", 1 <= full.rank <= full.dim)
    report.check(
        "monotone_in_powers", all(a <= b for a, b in zip(ranks, ranks[1:]))
    )
    if p["expect_cyclic"] is not None:
        report.check("expected_cyclicity", full.cyclic == p["expect_cyclic"])


@suite(
    "vandermonde",
    "span of Vandermonde-patterned vectors for distinct nodes",
    count=Param(int, 100, 1),
    max_n=Param(int, 8, 2),
    max_d=Param(int, 6, 1),
)
async def vandermonde(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    def instance(i: int, seed: int) -> dict[str, int]:
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, p["max_n"] + 1))
        d = int(rng.integers(1, p["max_d"] + 1))
        # nodes at least half a slot apart on the circle
        turns = (np.arange(n) + rng.uniform(0.0, 0.5, n)) / n
        zs = np.exp(2j * np.pi * rng.permutation(turns))
        return {"n": n, "d": d, "rank": vandermonde_span_rank(zs, d)}

    runs = await sweep(instance, p["count"], config.seed, config.jobs)
    omega = cmath.exp(2j * math.pi / 3)
    examples = {
        "pair": vandermonde_span_rank([1, -1], 1),
        "cube_roots": vandermonde_span_rank([1, omega, omega**2], 2),
        "collision": vandermonde_span_rank([1, 1], 3),
    }
    report.results.update(instances=runs, examples=examples)
    report.header = ["instance", "n", "d", "rank"]
    report.rows = [[i, r["n"], r["d"], r["rank"]] for i, r in enumerate(runs)]
    report.check(
        "full_rank", all(r["rank"] == r["n"] * r["d"] for r in runs)
    )
    report.check(
        "examples", examples == {"pair": 2, "cube_roots": 6, "collision": 3}
    )


@suite(
    "direct-sum-cyclicity",
    "eigenvalue-product prediction against the Krylov oracle",
    count=Param(int, 500, 1),
    max_d=Param(int, 5, 1),
    max_n=Param(int, 4, 1),
    square_count=Param(int, 50, 0),
)
async def direct_sum(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    def instance(i: int, seed: int) -> dict[str, Any]:
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, p["max_n"] + 1))
        d = int(rng.integers(1, p["max_d"] + 1))
        t, zs, u = roots_of_unity_instance(rng, n, d)
        if i % 5 == 0 and n >= 2:
            zs[1] = zs[0]
        r = direct_sum_cyclicity(t, zs, u)
        return {
            "n": n,
            "d": d,
            "predicted": r.predicted,
            "rank": r.krylov.rank,
            "agrees": r.agrees,
        }

    runs = await sweep(instance, p["count"], config.seed, config.jobs)
    diag12 = np.diag([1.0, 2.0])
    examples = {
        "distinct": direct_sum_cyclicity(diag12, [1, -1], [1, 1]).krylov,
        "collide": direct_sum_cyclicity(diag12, [1, 2], [1, 1]).krylov,
        "single": direct_sum_cyclicity(np.eye(1), [3.0], [1]).krylov,
    }
    square = square_cyclicity_search(p["square_count"], 4, config.seed)
    report.results.update(
        instances=len(runs),
        agreements=sum(r["agrees"] for r in runs),
        collisions=sum(not r["predicted"] for r in runs),
        examples={k: v.to_dict() for k, v in examples.items()},
        square_search=square.to_dict(),
    )
    report.header = ["instance", "n", "d", "predicted", "rank", "agrees"]
    report.rows = [
        [i, r["n"], r["d"], r["predicted"], r["rank"], r["agrees"]]
        for i, r in enumerate(runs)
    ]
    report.check("matches_krylov_oracle", all(r["agrees"] for r in runs))
    report.check(
        "collisions_exercised", any(not r["predicted"] for r in runs)
    )
    report.check(
        "examples",
        (
            examples["distinct"].rank,
            examples["collide"].rank,
            examples["single"].cyclic,
        )
        == (4, 3, True),
    )


@suite(
    "ratio-structure",
    "component ratios of (z_1 T + ... + z_n T)^k (u, ..., u)",
    count=Param(int, 50, 1),
    dim=Param(int, 6, 1),
    n_max=Param(int, 60, 0),
)
async def ratio_structure(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    d = p["dim"]

    def instance(i: int, seed: int) -> dict[str, float]:
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        u = rng.standard_normal(d)
        real = DenseMatrix(rng.standard_normal((d, d)) / math.sqrt(d))
        return {
            "mixed": ratio_structure_check(
                DenseMatrix(a / (2 * math.sqrt(d))), (1, 1j, 2), u, p["n_max"]
            ),
            "parity": ratio_structure_check(real, (1, -1), u, p["n_max"]),
        }

    runs = await sweep(instance, p["count"], config.seed, config.jobs)
    worst = {k: max(r[k] for r in runs) for k in ("mixed", "parity")}
    report.results.update(max_relative=worst)
    report.header = ["instance", "mixed", "parity"]
    report.rows = [[i, r["mixed"], r["parity"]] for i, r in enumerate(runs)]
    report.check("ratio_identity", max(worst.values()) <= 1e-10)


@suite(
    "volterra",
    "2JV = V*J under refinement and Phi along the (V + 2V) orbit",
    m_coarse=Param(int, 40, 8),
    m_fine=Param(int, 320, 8),
    m_phi=Param(int, 200, 8),
    n_max=Param(int, 30, 0),
    min_order=Param(float, 0.9),
    max_ratio=Param(float, 10.0),
)
async def volterra(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    coarse, fine = p["m_coarse"], p["m_fine"]
    if fine <= coarse:
        raise ConfigError("must exceed m_coarse", "params.m_fine")
    grids = sorted({coarse, 2 * coarse, 4 * coarse, fine})
    residuals = {m: volterra_intertwine_residual(m) for m in grids}
    order = math.log(residuals[coarse] / residuals[fine]) / math.log(
        fine / coarse
    )
    m = p["m_phi"]
    phi = phi_annihilation_check(np.ones(m), np.ones(m), m, p["n_max"])
    zero = phi_annihilation_check(np.zeros(m), np.zeros(m), m, p["n_max"])
    report.results.update(
        residuals={str(k): v for k, v in residuals.items()},
        order=order,
        phi=phi.to_dict(),
    )
    report.header = ["m", "residual"]
    report.rows = [[k, v] for k, v in residuals.items()]
    report.check("refinement_order", order >= p["min_order"])
    report.check("phi_within_defect", phi.ratio <= p["max_ratio"])
    report.check("zero_functionals", zero.max_abs_phi == 0.0)


DECADES = (10, 100, 1000, 10_000, 100_000)

SPOT_CHECKS = ((60, 30), (1000, 500), (100_000, 3000), (1_000_000, 500))


def _log_binomial_error(n: int, k: int) -> float:
    exact = math.log(math.comb(n, k))
    return abs(log_binomial(n, k) - exact) / max(1.0, abs(exact))


@suite(
    "asymptotics",
    "A_n, B_n, the Stirling band and the divergence bound",
    n=Param(int, None, 0),
    monotone_max=Param(int, 100_000, 3),
)
async def asymptotics(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    a0, b0 = a_n(0), b_n(0)
    report.check("a0_is_one", a0.sign == 1 and a0.log == 0.0)
    report.check("b0_is_e_minus_2", b0.sign == 1 and b0.log == -2.0)
    spot = {f"{n},{k}": _log_binomial_error(n, k) for n, k in SPOT_CHECKS}
    report.check("log_binomial", max(spot.values()) <= 1e-10)
    report.results["log_binomial_relative_error"] = spot

    grid = [p["n"]] if p["n"] is not None else [0, 1, 2, *DECADES]
    div = divergence_report([], grid)
    report.header = ["n", "ln_A", "ln_B", "ratio", "normalized_exponent"]
    report.rows = [
        [
            r.n,
            r.a.log,
            r.b.log,
            r.ratio,
            normalized_exponent(r.n) if r.n >= 2 else None,
        ]
        for r in div.rows
    ]
    report.results["rows"] = [r.to_dict() for r in div.rows]
    if p["n"] is not None:
        return

    a1 = a_n(1).to_float()
    report.check("a1_closed_form", abs(a1 - (1 + math.exp(-2) / 2)) <= 1e-12)

    top = p["monotone_max"]
    chunk = 10_000
    starts = list(range(2, top + 1, chunk))

    def logs_from(i: int, _: int) -> list[float]:
        lo = starts[i]
        return [a_n(n).log for n in range(lo, min(lo + chunk, top + 1))]

    pieces = await sweep(logs_from, len(starts), config.seed, config.jobs)
    logs = [v for piece in pieces for v in piece]
    report.check(
        "a_n_increasing", all(x < y for x, y in zip(logs, logs[1:]))
    )

    ratios = [math.exp(b_n(n).log - a_n(n).log) for n in DECADES]
    report.check("ratio_below_e_minus_2", max(ratios) <= math.exp(-2))
    report.check(
        "ratio_decreasing", all(x > y for x, y in zip(ratios, ratios[1:]))
    )

    exponent_grid = sorted({round(10 ** (2 + 4 * j / 40)) for j in range(41)})
    exponents = [normalized_exponent(n) for n in exponent_grid]
    report.check(
        "normalized_exponent_increasing",
        all(x < y for x, y in zip(exponents, exponents[1:])),
    )
    report.check("normalized_exponent_below_quarter", max(exponents) < 0.25)

    band = stirling_band_sweep((1000, 10_000, 100_000))
    report.check(
        "stirling_band",
        all(0 < a <= b < math.inf for a, b in zip(band.alphas, band.betas))
        and band.drift <= 2.0,
    )

    divergence = divergence_report([1000.0], [*DECADES, 1_000_000])
    report.check("divergence_onset", divergence.onset is not None)

    report.results.update(
        ratios=dict(zip(map(str, DECADES), ratios)),
        normalized_exponents=dict(zip(map(str, exponent_grid), exponents)),
        stirling=band.to_dict(),
        divergence=divergence.to_dict(),
        tail_thresholds=[tail_threshold(n).to_dict() for n in DECADES],
        split_sums=[split_sums(n).to_dict() for n in DECADES],
    )


@suite(
    "semigroup-ex1",
    "T_{t,s} = c^(s-t) e^(tS) + c^(s-t) I and its range defect",
    dim=Param(int, 12, 2),
    t_grid=Param(list, [0.5, 1.0, 2.0]),
    s_grid=Param(list, [0.0, 0.5, 1.5]),
)
async def semigroup_ex1(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    dim = p["dim"]
    shift = WeightedBackwardShift.from_rule("exp2decay", dim)
    c = 1.5 * float(np.linalg.norm(expm(shift), 2))

    def family(t: float, s: float) -> DirectSum:
        k = c ** (s - t)
        return DirectSum(
            (
                ScalarMultiple(k, MatrixExponential(shift, t)),
                ScalarMultiple(k, Identity(1)),
            )
        )

    rows = []
    for t in p["t_grid"]:
        for s in p["s_grid"]:
            k = c ** (s - t)
            m = materialize(family(t, s)) - k * np.eye(dim + 1)
            deficiency = dim + 1 - int(np.linalg.matrix_rank(m))
            rows.append([float(t), float(s), deficiency])
    t1, s1, t2, s2 = 0.5, 0.25, 1.25, 1.0
    product = materialize(family(t1, s1)) @ materialize(family(t2, s2))
    joint = materialize(family(t1 + t2, s1 + s2))
    law = float(np.linalg.norm(product - joint)) / float(
        np.linalg.norm(joint)
    )
    report.results.update(c=c, semigroup_law=law, grid=rows)
    report.header = ["t", "s", "rank_deficiency"]
    report.rows = rows
    report.check("range_not_dense", all(r[2] >= 1 for r in rows))
    report.check("semigroup_law", law <= 1e-10)


def _rotation_generator() -> DenseMatrix:
    return DenseMatrix(2 * math.pi * np.array([[0.0, 1.0], [-1.0, 0.0]]))


@suite(
    "semigroup-powers",
    "T_t^q = T_s^p for t/s = p/q; irrational ratios generate T",
    p=Param(int, 2, 1),
    q=Param(int, 3, 1),
    base=Param(float, 0.1),
    ratio=Param(float, GOLDEN),
)
async def semigroup_powers(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    gen = _rotation_generator()
    t, s = p["p"] * p["base"], p["q"] * p["base"]
    lhs = np.linalg.matrix_power(expm(gen, t), p["q"])
    rhs = np.linalg.matrix_power(expm(gen, s), p["p"])
    rational = float(np.linalg.norm(lhs - rhs, 2))
    rotation = float(
        np.linalg.norm(expm(gen, t) - materialize(Rotation2D(t)), 2)
    )
    verdict = is_generator(TorusPoint.approx(p["ratio"]))
    exact = is_generator(TorusPoint.exact(Fraction(p["p"], p["q"])))
    report.results.update(
        rational_residual=rational,
        rotation_residual=rotation,
        irrational=verdict.to_dict(),
        rational=exact.to_dict(),
    )
    report.check("rational_powers_agree", rational <= 1e-10)
    report.check("exponential_is_rotation", rotation <= 1e-12)
    report.check("irrational_generates", verdict.generator)
    report.check("rational_does_not", not exact.generator)


@suite(
    "ansari-cosets",
    "cosets of the coupled orbit in X x Z_q and the T^q subsequence",
    uses_operator=True,
    q=Param(int, 3, 1),
    n=Param(int, 1500, 1),
    net_size=Param(int, 100, 1),
    epsilon=Param(float, 0.1),
    x=Param(list, None),
    min_fraction=Param(float, 0.9, 0),
)
async def ansari_cosets(
    config: ExperimentConfig, p: dict[str, Any], report: Report
) -> None:
    q = p["q"]
    model = config.operator or Rotation2D(GOLDEN)
    x = _start_vector(p["x"], model)
    net = sphere_net(model.dim, p["net_size"], config.seed, model.field)
    dense = finite_power_experiment(model, x, q, p["n"], net, p["epsilon"])

    cycle = Rotation2D(1.0 / q)
    x0 = np.array([1.0, 0.0])
    on_orbit = np.array([pt.vector() for pt in orbit(cycle, x0, q - 1)])
    matched = finite_power_experiment(
        cycle,
        x0,
        q,
        3 * q,
        np.vstack([on_orbit, sphere_net(2, 20, config.seed)]),
        min(p["epsilon"], 0.5 * math.sin(math.pi / q)),
    )
    sets = [s for s in matched.cosets.sets.values() if s]
    report.results.update(dense=dense.to_dict(), matched=matched.to_dict())
    report.check("cosets_consistent", dense.cosets.consistent)
    report.check(
        "power_subsequence_covers", dense.power_fraction >= p["min_fraction"]
    )
    report.check(
        "matched_rotation_singletons",
        matched.cosets.consistent
        and matched.cosets.subgroup == frozenset({TorusPoint.identity()})
        and all(len(s) == 1 for s in sets),
    )
