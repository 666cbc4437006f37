"""Acceptance gate: one test per shipped criterion, tolerances pinned.

Each test prints a single ``[criterion N] PASS`` line so a scan of the
verbose log answers "which guarantees hold" without reading tracebacks.
Runtime ceilings are asserted, not aspirational.
"""

from __future__ import annotations

import time

import numpy as np

import elicitkit as ek
from conftest import decide_and_synthesize, random_validated_problems

REWARDS = (0.7, 1.0, 1.3, 1.6)


def coords(label: str) -> tuple[str, ...]:
    return tuple(label.split("|"))


def test_criterion_01_adjacency_shapes():
    timings = []

    start = time.monotonic()
    path = ek.adjacency_graph(ek.make_quadratic_loss(9))
    timings.append(time.monotonic() - start)
    assert path.n_edges == 9
    labels = path.actions
    expected = {frozenset((labels[i], labels[i + 1])) for i in range(9)}
    assert {frozenset((e.a, e.b)) for e in path.edges} == expected

    start = time.monotonic()
    star_wide = ek.adjacency_graph(ek.make_star(5, 0.6))
    timings.append(time.monotonic() - start)
    assert star_wide.n_edges == 5
    assert all("safe" in (e.a, e.b) for e in star_wide.edges)

    start = time.monotonic()
    star_tight = ek.adjacency_graph(ek.make_star(5, 0.3))
    timings.append(time.monotonic() - start)
    assert star_tight.n_edges == 15  # complete on 6 actions

    start = time.monotonic()
    problem, _ = ek.make_mc_test(3, 2)
    cube = ek.adjacency_graph(problem)
    timings.append(time.monotonic() - start)
    assert cube.n_edges == 12
    for edge in cube.edges:
        differing = sum(x != y for x, y in zip(coords(edge.a), coords(edge.b)))
        assert differing == 1

    assert max(timings) < 2.0
    print(f"[criterion 1] PASS: path 9, star 5, complete 15, cube 12 edges "
          f"(slowest {max(timings):.2f}s)")


def test_criterion_02_regret_is_universally_incentivizable():
    start = time.monotonic()
    problems = [
        ek.make_quadratic_loss(4),
        ek.make_star(5, 0.6),
        ek.make_state_matching(REWARDS),
        ek.make_close_guess(REWARDS),
        ek.make_mc_test(3, 2)[0],
        ek.make_cycle_rich_safe(),
    ]
    problems.extend(random_validated_problems(25, seed=11))
    for problem in problems:
        question = ek.build_question("regret", problem)
        assert ek.alignment_on_set(problem, question) is not None
        bundle = ek.ProblemBundle(problem=problem, question=question)
        method = decide_and_synthesize(bundle)
        report = ek.verify_incentivizability(bundle, method)
        assert report.passed and report.failures == ()
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    print(f"[criterion 2] PASS: 31 problems verified clean in {elapsed:.1f}s")


def test_criterion_03_within_x_impossibility(within_bundle):
    start = time.monotonic()
    verdict = ek.decide_incentivizable(within_bundle)
    assert verdict.status == "not_incentivizable"
    assert verdict.violation is not None
    assert verdict.violation.kind == "pairwise-misalignment"
    a, b = verdict.violation.actions
    assert ek.adjacency_test(within_bundle.problem, a, b).adjacent
    pair = ek.pairwise_alignment(within_bundle.problem, within_bundle.question, a, b)
    assert not pair.aligned

    control = ek.make_naive_bdm(within_bundle.problem, within_bundle.question)
    witness = ek.find_distortion_witness(within_bundle, control)
    assert witness is not None
    belief = np.asarray(witness.belief)
    eu = within_bundle.problem.utility @ belief
    best_u = eu.max()
    u_set = tuple(
        a
        for a, v in zip(within_bundle.problem.actions, eu)
        if v >= best_u - 1e-7 * (1.0 + abs(best_u))
    )
    assert u_set == witness.u_optimal
    ev = np.array(
        [
            ek.expected_payoff(control, belief, a)[1]
            for a in within_bundle.problem.actions
        ]
    )
    best_v = ev.max()
    v_set = tuple(
        a
        for a, v in zip(within_bundle.problem.actions, ev)
        if v >= best_v - 1e-7 * (1.0 + abs(best_v))
    )
    assert v_set == witness.v_optimal
    assert set(u_set) != set(v_set)
    u_rows = [within_bundle.problem.action_index[a] for a in u_set]
    gap = best_v - ev[u_rows].min()
    assert abs(gap - witness.value_gap) < 1e-12
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    print(f"[criterion 3] PASS: pairwise violation on ({a}, {b}), "
          f"control distorts with value gap {witness.value_gap:.4f}")


def test_criterion_04_complete_graph_dichotomy():
    start = time.monotonic()
    matching = ek.make_state_matching(REWARDS)
    question = ek.build_question("ex-post-optimality", matching)
    bundle = ek.ProblemBundle(problem=matching, question=question)
    verdict = ek.decide_incentivizable(bundle)
    assert verdict.status == "incentivizable"
    assert verdict.theorem == "global-alignment-sufficiency"
    for action, reward in zip(matching.actions, REWARDS):
        assert abs(verdict.certificate.gamma_of(action) - 1.0 / reward) < 1e-9

    fuzzy = ek.make_close_guess(REWARDS)
    graph = ek.adjacency_graph(fuzzy)
    assert graph.n_edges == 6  # complete on 4 actions
    for i in range(4):
        for j in range(i + 1, 4):
            for k in range(j + 1, 4):
                triple = (fuzzy.actions[i], fuzzy.actions[j], fuzzy.actions[k])
                assert ek.internal_independence(fuzzy, triple)
                deltas = np.vstack(
                    [
                        ek.payoff_delta(fuzzy, triple[0], triple[1]),
                        ek.payoff_delta(fuzzy, triple[0], triple[2]),
                    ]
                )
                assert np.linalg.matrix_rank(deltas, tol=1e-9) == 2
    fuzzy_bundle = ek.ProblemBundle(
        problem=fuzzy, question=ek.build_question("ex-post-optimality", fuzzy)
    )
    fuzzy_verdict = ek.decide_incentivizable(fuzzy_bundle)
    assert fuzzy_verdict.status == "not_incentivizable"
    assert fuzzy_verdict.theorem == "complete-graph-characterization"
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    print("[criterion 4] PASS: matching rewards give gamma = 1/r, "
          "half-credit variant is impossible")


def test_criterion_05_product_dichotomy():
    start = time.monotonic()
    problem, product = ek.make_mc_test(4, 2)
    improvement = ek.build_question("improvement", problem, product, split=2)
    cert = ek.weighted_alignment(problem, improvement, product)
    assert cert is not None
    signs = np.sign(np.asarray(cert.tau))
    np.testing.assert_array_equal(signs, [-1.0, -1.0, 1.0, 1.0])
    bundle = ek.ProblemBundle(
        problem=problem, question=improvement, product=product
    )
    method = decide_and_synthesize(bundle)
    report = ek.verify_incentivizability(
        bundle, method, spec=ek.GridSpec(samples=2000)
    )
    assert report.passed and report.failures == ()

    threshold = ek.build_question("threshold", problem, product, z=2)
    assert ek.weighted_alignment(problem, threshold, product) is None
    threshold_verdict = ek.decide_incentivizable(
        ek.ProblemBundle(problem=problem, question=threshold, product=product)
    )
    assert threshold_verdict.status == "not_incentivizable"
    assert threshold_verdict.theorem == "product-characterization"

    big_problem, big_product = ek.make_mc_test(4, 4)
    anything = ek.build_question("threshold", big_problem, big_product, z=1)
    big_bundle = ek.ProblemBundle(
        problem=big_problem, question=anything, product=big_product
    )
    control = ek.make_naive_bdm(big_problem, anything)
    witness = ek.find_distortion_witness(big_bundle, control)
    assert witness is not None
    assert set(witness.u_optimal) != set(witness.v_optimal)
    belief = np.asarray(witness.belief)
    support = np.nonzero(belief > 1e-9)[0]
    assert len(support) == 2
    support_labels = {big_problem.states[i] for i in support}
    assert support_labels == {"2|3|3|3", "3|2|2|2"}
    np.testing.assert_allclose(belief[support], 0.5)
    # every payment-optimal action locks in at least one correct answer
    # in both supported states, the hallmark of playing it safe
    for action in witness.v_optimal:
        g = big_problem.action_index[action]
        for i in support:
            assert anything.values[g, i] == 1.0
    # while some utility-optimal action gambles and can score zero
    gambles = [
        action
        for action in witness.u_optimal
        if any(
            anything.values[big_problem.action_index[action], i] == 0.0
            for i in support
        )
    ]
    assert gambles
    assert witness.value_gap > 0.1
    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    print(f"[criterion 5] PASS: tau signs (-,-,+,+), threshold fails, "
          f"control gap {witness.value_gap:.3f} in {elapsed:.1f}s")


def test_criterion_06_lottery_value_law():
    start = time.monotonic()
    weights = []
    for step in range(11):
        q = step / 10.0
        weight = ek.LotteryForm.expected_prize_weight(q, q)
        assert abs(weight - (1.0 + q * q) / 2.0) <= 1e-12
        weights.append(weight)
    assert all(b > a for a, b in zip(weights, weights[1:]))
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    print("[criterion 6] PASS: truthful prize weight is (1+q^2)/2, increasing")


def test_criterion_07_piecewise_stitching(chained_bundle):
    start = time.monotonic()
    verdict = ek.decide_incentivizable(chained_bundle)
    assert verdict.status == "incentivizable"
    assert verdict.theorem == "piecewise-alignment-sufficiency"
    cert = verdict.certificate
    assert len(cert.parts) == 3
    ratios = set()
    for part, part_cert in zip(cert.parts, cert.certificates):
        first, second = sorted(part)
        ratios.add(round(part_cert.gamma_of(second) / part_cert.gamma_of(first), 6))
    assert len(ratios) >= 2  # the gauge really changes across parts
    method = ek.synthesize(chained_bundle, verdict)
    assert method.stitch_discrepancy <= 1e-12
    report = ek.verify_incentivizability(
        chained_bundle, method, spec=ek.GridSpec(denominator=12)
    )
    assert report.passed and report.failures == ()
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print(f"[criterion 7] PASS: stitch discrepancy {method.stitch_discrepancy:.2e}, "
          f"{report.checked} beliefs verified")


def test_criterion_08_cycle_rich_example():
    start = time.monotonic()
    problem = ek.make_cycle_rich_safe()
    assert not ek.adjacency_test(problem, "theta0", "theta1").adjacent
    result = ek.cycle_rich(problem, problem.actions)
    assert result.status == "cycle-rich"
    assert result.rich is True
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print("[criterion 8] PASS: theta0/theta1 non-adjacent yet the set is cycle-rich")


def test_criterion_09_value_function_shape(chained_bundle, mc32_bundle, aligned_method):
    start = time.monotonic()
    mechanisms = [
        aligned_method,
        decide_and_synthesize(chained_bundle),
        decide_and_synthesize(mc32_bundle),
    ]
    rng = np.random.default_rng(20240818)
    for method in mechanisms:
        k = method.n_states

        def best(p: np.ndarray) -> float:
            return ek.value_of_information(method, p)

        for _ in range(1000):
            p = rng.dirichlet(np.ones(k))
            q = rng.dirichlet(np.ones(k))
            mid = 0.5 * (p + q)
            assert best(mid) <= 0.5 * (best(p) + best(q)) + 1e-9

        segments = 0
        attempts = 0
        while segments < 200 and attempts < 20_000:
            attempts += 1
            p0 = rng.dirichlet(3.0 * np.ones(k))
            values = np.array(
                [ek.expected_payoff(method, p0, a)[1] for a in method.actions]
            )
            order = np.argsort(values)
            if values[order[-1]] - values[order[-2]] < 1e-6:
                continue
            g = int(order[-1])
            w = rng.normal(size=k)
            w -= w.mean()
            row = method.c1[g] - method.c1[g].mean()
            norm = float(row @ row)
            if norm > 1e-18:
                w -= (w @ row) / norm * row
                w -= w.mean()
            peak = np.abs(w).max()
            if peak < 1e-12:
                continue
            step = min(1e-3, 0.5 * float(p0.min()) / peak)
            lo = p0 - step * w
            hi = p0 + step * w
            if lo.min() <= 0.0 or hi.min() <= 0.0:
                continue
            ends = []
            keep = True
            for q in (lo, hi):
                vals = np.array(
                    [ek.expected_payoff(method, q, a)[1] for a in method.actions]
                )
                if int(vals.argmax()) != g:
                    keep = False
                    break
                ends.append(vals.max())
            if not keep:
                continue
            assert abs(best(p0) - 0.5 * (ends[0] + ends[1])) <= 1e-9
            segments += 1
        assert segments == 200, method.provenance
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    print(f"[criterion 9] PASS: convex on 3000 segments, affine on 600 "
          f"optimality-preserving ones ({elapsed:.1f}s)")


def test_criterion_10_oracle_and_invariant_suite(within_bundle, mc32_bundle):
    start = time.monotonic()
    star = ek.make_star(4, 0.6)
    matching = ek.make_state_matching(REWARDS)
    fuzzy = ek.make_close_guess(REWARDS)
    rich = ek.make_cycle_rich_safe()
    cases = [
        (within_bundle, "not_incentivizable"),
        (
            ek.ProblemBundle(problem=star, question=ek.build_question("regret", star)),
            "incentivizable",
        ),
        (
            ek.ProblemBundle(
                problem=matching,
                question=ek.build_question("ex-post-optimality", matching),
            ),
            "incentivizable",
        ),
        (
            ek.ProblemBundle(
                problem=fuzzy, question=ek.build_question("ex-post-optimality", fuzzy)
            ),
            "not_incentivizable",
        ),
        (mc32_bundle, "incentivizable"),
        (
            ek.ProblemBundle(problem=rich, question=ek.build_question("regret", rich)),
            "incentivizable",
        ),
    ]
    for bundle, expected_status in cases:
        record = ek.oracle_cross_check(bundle)
        assert record.consistent, record.detail
        assert record.verdict.status == expected_status

    rng = np.random.default_rng(5)
    for _ in range(20):
        v = rng.normal(size=6)
        projected = ek.project_zero_sum(v)
        assert abs(projected.sum()) < 1e-9
        np.testing.assert_allclose(ek.project_zero_sum(projected), projected, atol=1e-12)

    for _ in range(20):
        y = rng.normal(size=5)
        if y.max() - y.min() < 1e-3:
            continue
        gamma = float(rng.uniform(0.5, 3.0)) * float(rng.choice([-1.0, 1.0]))
        kappa = float(rng.normal())
        forward = ek.questions_equivalent(gamma * y + kappa, y)
        assert forward is not None
        assert abs(forward[0] - gamma) < 1e-6
        backward = ek.questions_equivalent(y, gamma * y + kappa)
        assert backward is not None
        assert abs(backward[0] - 1.0 / gamma) < 1e-6

    for problem in random_validated_problems(10, seed=3):
        for kind in ("regret", "expected-payoff"):
            question = ek.build_question(kind, problem)
            cert = ek.alignment_on_set(problem, question)
            assert cert is not None
            rebuilt = ek.reconstruct_question(problem, cert)
            np.testing.assert_allclose(rebuilt, question.values, atol=1e-7)
    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    print(f"[criterion 10] PASS: six oracle cross-checks consistent, "
          f"invariant sweeps clean ({elapsed:.1f}s)")
