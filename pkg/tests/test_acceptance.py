"""Acceptance criteria, one test each, each printing a single PASS/FAIL line.

The chess and mushroom FIMI files are looked up in ``$BERNMIX_FIMI_DIR`` or,
failing that, ``data/fimi`` next to this repository's ``tests`` directory.
Without them criteria 1 and 9 fail with an explanation rather than skip.
"""

import io
import os
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from bernmix.cli import main
from bernmix.dataset import TransactionDataset, item_frequencies, load_fimi, sample_from_model, split
from bernmix.em import fit_em
from bernmix.evaluation import evaluate, relative_difference_by_length
from bernmix.gibbs import conditional_dp, conditional_finite, fit_gibbs_dp, fit_gibbs_finite
from bernmix.miner import brute_force_frequencies, min_count, mine_exact, mine_oracle
from bernmix.model import Hyperparams, MixtureModel, itemset_probability, save_model
from bernmix.vb import fit_vb_dp, fit_vb_finite

from test_gibbs import dp_conditional_error, finite_oracle, random_dp_case, state_for
from test_model import random_model
from test_vb import binary, log_evidence

FIMI_DIR = Path(os.environ.get("BERNMIX_FIMI_DIR", Path(__file__).parent.parent / "data" / "fimi"))

REFERENCE_COUNTS = {
    "chess": (0.50, 1_262_028,
              [37, 530, 3977, 18360, 57231, 127351, 209743, 261451, 249427, 181832], 152089),
    "mushroom": (0.20, 53_575,
                 [42, 369, 1453, 3534, 6261, 8821, 10171, 9497, 7012, 4004], 2411),
}

SYN_SEEDS = range(5)
BAYESIAN = ("vb", "gibbs", "dp-vb", "dp-gibbs")


def fimi(name):
    path = FIMI_DIR / f"{name}.dat"
    return path if path.exists() else None


def profile(coll):
    counts = coll.counts_by_length()
    head = [counts.get(L, 0) for L in range(1, 11)]
    tail = sum(n for L, n in counts.items() if L > 10)
    return len(coll), head, tail


# -- 1 -------------------------------------------------------------------------------------

def test_criterion_01_reference_itemset_counts(acceptance):
    missing = [n for n in REFERENCE_COUNTS if fimi(n) is None]
    if missing:
        acceptance(1, False, f"{', '.join(missing)}.dat not found in {FIMI_DIR}; "
                             "the reference counts cannot be checked without the files")
    notes = []
    ok = True
    for name, (theta, total, head, tail) in REFERENCE_COUNTS.items():
        ds = load_fimi(fimi(name))
        want = (total, head, tail)
        full = profile(mine_exact(ds, theta))
        if full == want:
            notes.append(f"{name} N={ds.n_transactions} full data matches")
            continue
        half, _ = split(ds, 0.5, seed=0)
        part = profile(mine_exact(half, theta))
        matched = part == want
        ok &= matched
        notes.append(f"{name} N={ds.n_transactions} full total {full[0]}, training half "
                     f"total {part[0]} ({'matches' if matched else 'no match'})")
    acceptance(1, ok, "; ".join(notes))


# -- 2 -------------------------------------------------------------------------------------

def test_criterion_02_oracle_equivalence(acceptance):
    rng = np.random.default_rng(20240601)
    thetas = [round(0.1 * i, 1) for i in range(1, 10)]
    mismatches = 0
    for _ in range(100):
        n, d = int(rng.integers(1, 31)), int(rng.integers(1, 13))
        ds = TransactionDataset.from_dense(rng.random((n, d)) < rng.uniform(0.1, 0.9))
        bf = brute_force_frequencies(ds, d, limit=1 << 13)
        for theta in thetas:
            need = min_count(theta, n)
            want = {k: v for k, v in bf.items() if round(v * n) >= need}
            mismatches += mine_exact(ds, theta).itemsets != want
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 13))
        m = random_model(rng, int(rng.integers(1, 6)), d)
        rows = ((np.arange(1 << d)[:, None] >> np.arange(d)) & 1).astype(float)
        px = np.prod(np.where(rows[:, :, None] == 1, m.bernoulli, 1 - m.bernoulli), axis=1) @ m.weights
        for _ in range(10):
            items = tuple(sorted(rng.choice(d, size=int(rng.integers(0, d + 1)), replace=False)))
            marg = px[np.all(rows[:, list(items)] == 1, axis=1)].sum()
            worst = max(worst, abs(itemset_probability(m, items) - marg))
    acceptance(2, mismatches == 0 and worst <= 1e-10,
               f"{mismatches} mismatches over 100 datasets x 9 thresholds; "
               f"max marginalisation error {worst:.2e}")


# -- Syn-15 replica shared by 3, 4, 6, 7, 8 ----------------------------------------------------

@pytest.fixture(scope="module")
def syn15():
    rng = np.random.default_rng(2024)
    gen = MixtureModel(rng.dirichlet(np.ones(15)), rng.beta(0.5, 0.5, size=(30, 15)))
    ds = sample_from_model(gen, 10_000, seed=2025)
    train, test = split(ds, 0.5, seed=0)
    hyper = Hyperparams.from_frequencies(item_frequencies(ds))
    return {"full": ds, "train": train, "test": test, "hyper": hyper}


@pytest.fixture(scope="module")
def syn15_fits(syn15):
    train, hyper = syn15["train"], syn15["hyper"]
    fitters = {
        "em": lambda s: fit_em(train, 15, seed=s),
        "vb": lambda s: fit_vb_finite(train, 15, hyper, seed=s),
        "dp-vb": lambda s: fit_vb_dp(train, 15, hyper, seed=s),
        "gibbs": lambda s: fit_gibbs_finite(train, 15, hyper, seed=s),
        "dp-gibbs": lambda s: fit_gibbs_dp(train, hyper, seed=s),
    }
    return {name: [fit(s) for s in SYN_SEEDS] for name, fit in fitters.items()}


def small_sets():
    rng = np.random.default_rng(7)
    out = []
    for n, d in ((40, 5), (200, 12), (500, 20)):
        gen = MixtureModel(rng.dirichlet(np.ones(4)), rng.beta(0.5, 0.5, size=(d, 4)))
        out.append(sample_from_model(gen, n, int(rng.integers(1 << 30))))
    return out


# -- 3 -------------------------------------------------------------------------------------

def test_criterion_03_em_monotone(acceptance, syn15):
    sets = small_sets() + [syn15["train"]]
    for name in REFERENCE_COUNTS:
        if fimi(name) is not None:
            sets.append(split(load_fimi(fimi(name)), 0.5, seed=0)[0])
    worst = 0.0
    for ds in sets:
        for seed in range(5):
            _, trace = fit_em(ds, 5, seed=seed)
            steps = np.diff(trace.objective)
            worst = min(worst, steps.min(initial=0.0))
    ds = syn15["train"]
    model, trace = fit_em(ds, 1)
    exact = np.array_equal(model.bernoulli[:, 0], item_frequencies(ds)) and trace.converged
    acceptance(3, worst >= -1e-8 and exact,
               f"{len(sets)} datasets x 5 seeds, largest decrease {-worst:.2e}; "
               f"K=1 closed form {'exact' if exact else 'NOT exact'} "
               f"after {trace.iterations} iterations")


# -- 4 -------------------------------------------------------------------------------------

def test_criterion_04_vb_monotone_and_bounded(acceptance, syn15):
    ds, hyper = syn15["train"], syn15["hyper"]
    worst = 0.0
    for fit in (fit_vb_finite, fit_vb_dp):
        for seed in range(5):
            _, trace = fit(ds, 15, hyper, seed=seed)
            worst = min(worst, np.diff(trace.objective).min(initial=0.0))
    gap = -np.inf
    for xs in ([1], [1, 0], [1, 1, 0], [0, 1, 1, 0], [1, 1, 1, 1]):
        evidence = log_evidence(xs, (1.0, 1.0), 1.0, 1.0)
        for alpha, fit in ((2.0, fit_vb_finite), (1.0, fit_vb_dp)):
            for seed in range(3):
                _, trace = fit(binary(xs), 2, Hyperparams.scalar(1, alpha, 1.0, 1.0),
                               seed=seed, tol=0.0, max_iters=300)
                gap = max(gap, max(trace.objective) - evidence)
    acceptance(4, worst >= -1e-6 and gap <= 1e-4,
               f"largest ELBO decrease {-worst:.2e} (finite and DP, 5 seeds each); "
               f"max ELBO - ln p(T) on the tiny instances {gap:.3e}")


# -- 5 -------------------------------------------------------------------------------------

def test_criterion_05_gibbs_micro(acceptance):
    err = 0.0
    h = Hyperparams.scalar(1, 2.0, 1.0, 1.0)
    s = state_for([[0], [], [0]], 1, [0, 1, 0], 2, h)
    s.remove(2)
    err = max(err, np.abs(conditional_finite(s, 2) - [2 / 3, 1 / 3]).max())
    h = Hyperparams.scalar(1, 1.0, 1.0, 1.0)
    s = state_for([[0], [0]], 1, [0, 1], 2, h)
    s.remove(1)
    s.delete_component(1)
    err = max(err, np.abs(conditional_dp(s, 1) - [4 / 7, 3 / 7]).max())

    rng = np.random.default_rng(55)
    for _ in range(10):
        n, d = int(rng.integers(2, 6)), int(rng.integers(1, 3))
        x = (rng.random((n, d)) < 0.5).astype(int)
        rows = [np.flatnonzero(r) for r in x]
        h = Hyperparams(2.0, rng.uniform(1, 3, d), rng.uniform(1, 3, d))
        z = rng.integers(0, 2, size=n)
        mu = int(rng.integers(n))
        s = state_for(rows, d, z, 2, h)
        s.remove(mu)
        err = max(err, np.abs(conditional_finite(s, mu) - finite_oracle(x, z, mu, h)).max())
        err = max(err, dp_conditional_error(*random_dp_case(rng)))

    data = TransactionDataset.from_dense(np.random.default_rng(5).random((20, 5)) < 0.4)
    hyper = Hyperparams.from_frequencies(item_frequencies(data))
    fit_gibbs_finite(data, 4, hyper, n_sweeps=1000, burn_in=10, seed=0, check=True)
    fit_gibbs_dp(data, hyper, n_sweeps=1000, burn_in=10, seed=0, check=True)
    acceptance(5, err <= 1e-10,
               f"max conditional error vs oracles {err:.2e}; 2 x 1000 checked sweeps clean")


# -- 6, 7, 8 -------------------------------------------------------------------------------

def test_criterion_06_synthetic_quality(acceptance, syn15, syn15_fits):
    truth = mine_exact(syn15["test"], 0.30)
    e_hat = {}
    for name, runs in syn15_fits.items():
        vals = [evaluate(truth, mine_oracle(m, 0.30), m).e_hat for m, _ in runs]
        e_hat[name] = float(np.mean(vals))
    ok = all(e_hat[b] <= 0.05 and e_hat[b] <= e_hat["em"] + 0.01 for b in BAYESIAN)
    acceptance(6, ok, "mean E_hat over 5 seeds: "
               + ", ".join(f"{k} {100 * v:.2f}%" for k, v in e_hat.items())
               + f" ({len(truth)} true itemsets at 0.30)")


def test_criterion_07_dp_component_count(acceptance, syn15_fits):
    means = [trace.mean_k_active() for _, trace in syn15_fits["dp-gibbs"]]
    overall = float(np.mean(means))
    acceptance(7, 9 <= overall <= 18,
               f"mean K_active {overall:.2f} (per seed {', '.join(f'{v:.1f}' for v in means)})")


def test_criterion_08_em_length_profile(acceptance, syn15, syn15_fits):
    # the replica yields no itemsets beyond length 4 at 0.30, so the profile is taken at
    # the highest threshold on a 0.05 grid whose true collection reaches length 6
    for theta in np.arange(0.30, 0.0, -0.05).round(2):
        truth = mine_exact(syn15["test"], float(theta))
        if truth.max_length() >= 6:
            break
    profiles = []
    for model, _ in syn15_fits["em"]:
        d = relative_difference_by_length(truth, model)
        profiles.append([d[L] for L in range(1, 7)])
    good = [all(p[i + 1] <= p[i] for i in range(5)) for p in profiles]
    shown = "; ".join("[" + " ".join(f"{v:+.4f}" for v in p) + "]" for p in profiles)
    acceptance(8, sum(good) >= 4,
               f"theta {theta}: non-increasing D_hat in {sum(good)}/5 seeds; L=1..6 per seed {shown}")


# -- 9 -------------------------------------------------------------------------------------

def test_criterion_09_model_mining_speed(acceptance, tmp_path):
    path = fimi("chess")
    if path is None:
        acceptance(9, False, f"chess.dat not found in {FIMI_DIR}; timing needs the real data")
    ds = load_fimi(path)
    train, _ = split(ds, 0.5, seed=0)
    model, _ = fit_em(train, 25, seed=0)
    save_model(model, tmp_path / "chess25.json")
    start = time.perf_counter()
    main(["mine", "--input", str(path), "--minsup", "0.5", "--output", str(tmp_path / "d.txt")],
         out=io.StringIO())
    t_data = time.perf_counter() - start
    start = time.perf_counter()
    main(["mine-model", "--input", str(tmp_path / "chess25.json"), "--minsup", "0.5",
          "--output", str(tmp_path / "m.txt")], out=io.StringIO())
    t_model = time.perf_counter() - start
    acceptance(9, t_model <= t_data,
               f"mine {t_data:.1f}s, mine-model {t_model:.1f}s, ratio {t_data / t_model:.2f}x")


# -- 10 ------------------------------------------------------------------------------------

def _snapshot(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def _pipeline(workdir: Path) -> dict[str, bytes]:
    workdir.mkdir()
    rng = np.random.default_rng(3)
    save_model(MixtureModel(rng.dirichlet(np.ones(4)), rng.beta(0.5, 0.5, size=(12, 4))),
               workdir / "gen.json")
    logs = {}

    def run(tag, *argv):
        out = io.StringIO()
        code = main([str(a) for a in argv], out=out)
        assert code == 0, tag
        logs[tag] = out.getvalue().replace(str(workdir), "<dir>").encode()

    w = workdir
    run("gen", "gen", "--input", w / "gen.json", "--n", 400, "--seed", 9, "--output", w / "d.dat")
    run("mine", "mine", "--input", w / "d.dat", "--minsup", 0.2, "--output", w / "truth.txt")
    budgets = {"em": [], "vb": [], "dp-vb": [], "gibbs": ["--sweeps", 8, "--burn-in", 3],
               "dp-gibbs": ["--sweeps", 8, "--burn-in", 3]}
    for method, extra in budgets.items():
        k = [] if method == "dp-gibbs" else ["--k", 4]
        run(f"train-{method}", "train", "--input", w / "d.dat", "--method", method, *k, *extra,
            "--repeats", 2, "--seed", 5, "--train-fraction", 0.5, "--output", w / f"{method}.json")
        models = [w / f"{method}.run0.json", w / f"{method}.run1.json"]
        run(f"mine-model-{method}", "mine-model", "--input", models[0], "--minsup", 0.2,
            "--output", w / f"{method}.sets.txt")
        run(f"eval-{method}", "eval", "--truth", w / "truth.txt", "--model", *models,
            "--minsup", 0.2, "--output", w / f"{method}.report")
    files = _snapshot(workdir)
    files.update({f"stdout:{k}": v for k, v in logs.items()})
    return files


def test_criterion_10_determinism(acceptance, tmp_path):
    # reports embed input paths, so both runs use the same directory
    a = _pipeline(tmp_path / "run")
    shutil.rmtree(tmp_path / "run")
    b = _pipeline(tmp_path / "run")
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    acceptance(10, not differing,
               f"{len(a)} outputs from gen, mine, train (5 methods), mine-model, eval compared; "
               f"differing: {differing or 'none'}")
