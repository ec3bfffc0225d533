import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexclinch.agents import AgentPolicy, truthful_policies, with_cheater
from flexclinch.instances import random_instance
from flexclinch.mechanisms import (
    ClinchLedger,
    MechanismTag,
    Outcome,
    clearing_price,
    clinch_step,
    final_rationing,
    run_market_clearing,
    run_mca,
    run_vcg,
    solve_welfare_max,
    welfare_of,
)
from flexclinch.mechanisms.mca import iteration_cap, price_at
from flexclinch.model import (
    DegenerateDemandError,
    InputError,
    QuadraticDiscomfort,
    RewardParams,
    desired_reduction,
    make_instance,
    reward_total,
)

from oracles import optimizer_vcg_payments, optimizer_welfare_max, uncapped_clearing_price

# payment of each of two identical users (omega 0.1, a=3, b=0.02):
# R(150/7) - d(75/7) - [R(12.5) - d(12.5)]
TWO_USER_VCG_PAYMENT = (3 * 150 / 7 - 0.02 * (150 / 7) ** 2 - 0.1 * (75 / 7) ** 2) - (34.375 - 15.625)


class TestWelfareSolver:
    def test_single_user(self, single_user):
        q, lam = solve_welfare_max(single_user.users, single_user.reward)
        assert lam == pytest.approx(2.5, abs=1e-9)
        assert q[0] == pytest.approx(12.5, abs=1e-8)

    def test_two_identical_users(self, two_identical):
        q, lam = solve_welfare_max(two_identical.users, two_identical.reward)
        assert lam == pytest.approx(15 / 7, abs=1e-9)
        assert q == pytest.approx([75 / 7, 75 / 7], abs=1e-8)

    def test_no_users(self):
        q, _ = solve_welfare_max((), RewardParams(3, 0.02, 10))
        assert q.size == 0

    def test_linear_reward_rejected(self, two_identical):
        with pytest.raises(DegenerateDemandError):
            solve_welfare_max(two_identical.users, RewardParams(3, 0.0, 75))

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_general_optimizer(self, seed):
        inst = random_instance(seed, n=2 + seed % 4)
        q, _ = solve_welfare_max(inst.users, inst.reward)
        w_ref, _ = optimizer_welfare_max([u.discomfort.omega for u in inst.users],
                                         [u.q_max for u in inst.users], 3, 0.02, inst.reward.L)
        assert welfare_of(inst, q) >= w_ref - 1e-7


class TestVCG:
    def test_two_identical_users(self, two_identical):
        out = run_vcg(two_identical)
        assert out.mechanism_tag is MechanismTag.VCG
        assert out.allocation == pytest.approx([75 / 7] * 2, abs=1e-8)
        assert out.payment == pytest.approx([TWO_USER_VCG_PAYMENT] * 2, abs=1e-7)
        assert out.payment[0] == pytest.approx(24.872, abs=1e-3)
        assert out.welfare == pytest.approx(32.143, abs=1e-3)

    def test_matches_optimizer_oracle(self, two_identical, asymmetric_caps):
        for inst in (two_identical, asymmetric_caps, random_instance(4, n=4)):
            out = run_vcg(inst)
            q, pay = optimizer_vcg_payments([u.discomfort.omega for u in inst.users],
                                            [u.q_max for u in inst.users], 3, 0.02, inst.reward.L)
            assert out.allocation == pytest.approx(q, abs=1e-5)
            assert out.payment == pytest.approx(pay, abs=1e-5)

    def test_single_user_is_paid_the_full_reward(self, single_user):
        out = run_vcg(single_user)
        assert out.payment[0] == pytest.approx(reward_total(12.5, single_user.reward), abs=1e-8)
        assert out.payment[0] == pytest.approx(34.375, abs=1e-8)

    def test_no_users(self):
        from flexclinch.model import Instance

        out = run_vcg(Instance((), RewardParams(3, 0.02, 1)))
        assert out == Outcome.empty(MechanismTag.VCG)

    def test_solver_called_n_plus_one_times(self, asymmetric_caps):
        calls = []

        def counting(*args, **kw):
            calls.append(1)
            return solve_welfare_max(*args, **kw)

        run_vcg(random_instance(2, n=5), solver=counting)
        assert len(calls) == 6

    def test_literal_pivot_term(self, two_identical):
        # R evaluated at the others' reduction only
        q = 75 / 7
        expected = (3 * q - 0.02 * q * q - 0.1 * q * q) - 18.75
        out = run_vcg(two_identical, literal_pivot=True)
        assert out.payment == pytest.approx([expected] * 2, abs=1e-7)
        assert out.payment[0] < 0

    def test_declared_discomforts(self, two_identical):
        fake = [QuadraticDiscomfort(0.2), QuadraticDiscomfort(0.1)]
        out = run_vcg(two_identical, discomforts=fake)
        assert out.allocation[0] < out.allocation[1]


class TestMarketClearing:
    def test_two_identical_users(self, two_identical):
        out = run_market_clearing(two_identical)
        assert out.final_price == pytest.approx(15 / 7, abs=1e-9)
        assert out.payment == pytest.approx([(15 / 7) * (75 / 7)] * 2, abs=1e-7)
        assert out.payment[0] == pytest.approx(22.959, abs=1e-3)

    def test_single_user(self, single_user):
        out = run_market_clearing(single_user)
        assert out.final_price == pytest.approx(2.5, abs=1e-9)
        assert out.payment[0] == pytest.approx(31.25, abs=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_closed_form_price_when_caps_slack(self, seed):
        rng = np.random.default_rng(seed)
        omegas = rng.uniform(0.5, 1.5, size=4)
        inst = make_instance(omegas, [20] * 4, L=80, baselines=[20] * 4)
        lam = clearing_price(inst, truthful_policies(inst), 1e-12)
        assert lam == pytest.approx(uncapped_clearing_price(omegas, 3, 0.02), abs=1e-9)

    def test_no_supply_price_rises_to_top(self, two_identical):
        pols = [AgentPolicy(u.discomfort, u.feasible, QuadraticDiscomfort(1e12)) for u in two_identical.users]
        out = run_market_clearing(two_identical, pols)
        assert out.final_price == pytest.approx(3.0, abs=1e-6)
        assert out.allocation == pytest.approx([0, 0], abs=1e-9)

    def test_linear_reward_rejected(self):
        with pytest.raises(DegenerateDemandError):
            run_market_clearing(make_instance([0.1], [1], b=0.0))


class TestClinchStep:
    def test_rivals_short_of_demand(self):
        assert list(clinch_step([8, 8], 10, [0, 0])) == [2, 2]

    def test_rivals_cover_demand(self):
        assert list(clinch_step([12, 12], 10, [0, 0])) == [0, 0]

    def test_nets_prior_clinches(self):
        assert list(clinch_step([8, 8], 10, [1.5, 0])) == [0.5, 2]

    def test_negative_inputs_rejected(self):
        with pytest.raises(InputError):
            clinch_step([-1, 2], 1, [0, 0])

    @given(st.lists(st.floats(0, 100), min_size=2, max_size=8), st.floats(0, 200),
           st.floats(0, 100), st.data())
    def test_own_bid_does_not_matter(self, bids, demand, new_bid, data):
        i = data.draw(st.integers(0, len(bids) - 1))
        prior = data.draw(st.lists(st.floats(0, 50), min_size=len(bids), max_size=len(bids)))
        perturbed = list(bids)
        perturbed[i] = new_bid
        assert clinch_step(bids, demand, prior)[i] == clinch_step(perturbed, demand, prior)[i]


class TestFinalRationing:
    def test_pure_split(self):
        assert list(final_rationing([10, 10], [0, 0], 15)) == [7.5, 7.5]

    def test_with_prior_clinches(self):
        share = final_rationing([10, 10], [2, 0], 15)
        assert share == pytest.approx([8 * 13 / 18, 10 * 13 / 18])
        assert share == pytest.approx([5.778, 7.222], abs=1e-3)
        assert share[0] + 2 + share[1] == pytest.approx(15)

    def test_nothing_left(self):
        assert list(final_rationing([10, 10], [4, 3], 7)) == [0, 0]

    def test_no_residual_bids(self):
        assert list(final_rationing([2, 3], [2, 3], 9)) == [0, 0]

    def test_literal_formula(self):
        assert final_rationing([10, 10], [2, 0], 15, literal=True) == pytest.approx([6.0, 7.5])


class TestMCA:
    def test_single_user_against_demand_curve(self, single_user):
        out, ledger = run_mca(single_user, epsilon=1e-5)
        assert out.allocation[0] == pytest.approx(12.5, abs=1e-3)
        assert out.payment[0] == pytest.approx(34.375, abs=1e-3)
        assert out.payment[0] == pytest.approx(run_vcg(single_user).payment[0], abs=1e-3)

    def test_two_identical_users(self, two_identical):
        out, _ = run_mca(two_identical, epsilon=1e-5)
        vcg = run_vcg(two_identical)
        assert out.allocation == pytest.approx([75 / 7] * 2, abs=1e-3)
        assert out.payment == pytest.approx(vcg.payment, abs=1e-3)
        assert out.payment[0] == pytest.approx(24.872, abs=1e-3)

    def test_no_users(self):
        from flexclinch.model import Instance

        out, ledger = run_mca(Instance((), RewardParams(3, 0.02, 1)))
        assert out == Outcome.empty(MechanismTag.MCA)
        assert len(ledger) == 0

    def test_nothing_offered(self):
        inst = make_instance([0.1, 0.2], [0, 0], baselines=[5, 5])
        out, ledger = run_mca(inst, epsilon=1e-3)
        assert list(out.allocation) == [0, 0] and list(out.payment) == [0, 0]
        assert len(ledger) == 0

    def test_bad_arguments(self, two_identical):
        with pytest.raises(InputError):
            run_mca(two_identical, epsilon=0)
        with pytest.raises(DegenerateDemandError):
            run_mca(make_instance([0.1], [1], b=0.0))

    def test_payments_are_the_ledger_sums(self):
        inst = random_instance(11, n=5)
        out, ledger = run_mca(inst, epsilon=1e-3)
        arr = ledger.arrays()
        for i, uid in enumerate(inst.user_ids):
            mine = arr["user"] == i
            assert math.fsum(arr["zeta"][mine]) == pytest.approx(out.allocation[i], abs=1e-12)
            assert math.fsum(arr["lambda"][mine] * arr["zeta"][mine]) == pytest.approx(out.payment[i], abs=1e-10)

    @pytest.mark.parametrize("seed", range(6))
    def test_ledger_invariants(self, seed):
        inst = random_instance(seed, n=2 + seed, family="slot11" if seed % 2 else "slot17")
        pols = truthful_policies(inst)
        out, ledger = run_mca(inst, epsilon=1e-3)
        cum = np.zeros(inst.n)
        for ev in ledger:
            i = inst.index_of(ev.user_id)
            assert ev.quantity > 0
            assert 0 <= ev.lam <= inst.reward.a
            cum[i] += ev.quantity
            assert cum[i] <= pols[i].quantity(ev.lam) + 1e-9
        assert cum == pytest.approx(out.allocation, abs=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_termination_count(self, seed):
        inst = random_instance(seed, n=3)
        eps = 1e-3
        out, _ = run_mca(inst, epsilon=eps)
        a = inst.reward.a
        lam_t = price_at(a, out.iterations, eps)
        assert math.ceil((a - lam_t) / eps - 1e-9) == out.iterations
        assert out.iterations < iteration_cap(a, eps)
        # terminal price is the first with demand covering supply
        bids_t = sum(p.quantity(lam_t) for p in truthful_policies(inst))
        assert desired_reduction(lam_t, inst.reward) >= bids_t
        lam_p = price_at(a, out.iterations - 1, eps)
        assert desired_reduction(lam_p, inst.reward) < sum(p.quantity(lam_p) for p in truthful_policies(inst))

    @pytest.mark.parametrize("seed", range(6))
    def test_outcome_feasible(self, seed):
        inst = random_instance(seed, n=4)
        out, _ = run_mca(inst, epsilon=1e-3)
        caps = np.array([u.q_max for u in inst.users])
        assert np.all(out.allocation >= 0) and np.all(out.allocation <= caps + 1e-12)
        assert out.total_reduction == pytest.approx(out.allocation.sum(), abs=1e-12)
        lam_t = price_at(inst.reward.a, out.iterations, 1e-3)
        assert out.total_reduction <= desired_reduction(lam_t, inst.reward) + 1e-9
        # the default rationing meets the second-to-last demand exactly
        assert out.total_reduction == pytest.approx(desired_reduction(out.final_price, inst.reward), abs=1e-9)

    def test_literal_rationing_overshoots_after_prior_clinches(self):
        # the unnormalized split hands out demand on top of earlier clinches:
        # total = D + sum(prior) * (1 - D / sum(bids)) > D
        inst = random_instance(5, n=4)
        default, ledger = run_mca(inst, epsilon=1e-3)
        literal, _ = run_mca(inst, epsilon=1e-3, literal_rationing=True)
        assert any(not ev.rationing for ev in ledger)
        assert literal.total_reduction > default.total_reduction

    def test_misreport_changes_only_through_rivals(self, asymmetric_caps):
        out, _ = run_mca(asymmetric_caps, with_cheater(asymmetric_caps, 1, 0.3), epsilon=1e-3)
        truthful, _ = run_mca(asymmetric_caps, epsilon=1e-3)
        assert out.allocation[1] < truthful.allocation[1]


class TestOutcome:
    def test_equality_ignores_diagnostics(self, two_identical):
        a, _ = run_mca(two_identical, epsilon=1e-2)
        b = Outcome.build(two_identical, a.allocation.copy(), a.payment.copy(), MechanismTag.MCA)
        assert a == b
        b.payment[0] = np.nextafter(b.payment[0], np.inf)
        assert a != b
        assert a != "not an outcome"

    def test_to_dict(self, two_identical):
        d = run_vcg(two_identical).to_dict()
        assert d["mechanism"] == "vcg"
        assert [u["id"] for u in d["users"]] == ["u1", "u2"]

    def test_infeasible_allocation_rejected(self, two_identical):
        with pytest.raises(InputError):
            welfare_of(two_identical, np.array([40.0, 0.0]))
        with pytest.raises(InputError):
            welfare_of(two_identical, np.array([1.0]))

    def test_ledger_rows_and_cumulative(self):
        ledger = ClinchLedger(("a", "b"))
        ledger.record(3, 2.5, np.array([0.0, 1.0]))
        ledger.record(4, 2.4, np.array([0.5, 0.25]), rationing=True)
        assert list(ledger.rows()) == [(3, "b", 2.5, 1.0), (4, "a", 2.4, 0.5), (4, "b", 2.4, 0.25)]
        assert list(ledger.cumulative()) == [0.5, 1.25]
        assert ledger.events[-1].rationing
