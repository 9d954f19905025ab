import numpy as np
import pytest

import chaosmask as cm
from chaosmask.errors import GainNotCertifiedError, InfeasibleSynthesisError
from chaosmask.models import ChaoticMask, PolynomialMap
from chaosmask.synthesis import ObserverGain, _error_weight, default_w_max


class TestDistance:
    def test_scalar_known_value(self):
        # sigma_min([jw; 1]) = sqrt(w^2 + 1), minimized at w = 0: delta = 1.
        rep = cm.distance_to_unobservability(np.array([[0.0]]), np.array([[1.0]]),
                                             w_max=5.0, n_grid=200)
        assert rep.delta == pytest.approx(1.0, abs=1e-8)
        assert rep.w_star == pytest.approx(0.0, abs=1e-6)

    def test_unobservable_pair_near_zero(self):
        A = np.diag([2.0, -1.0])
        C = np.array([[0.0, 1.0]])
        rep = cm.distance_to_unobservability(A, C, w_max=10.0, n_grid=500)
        # Rank drops at w = 0 along the unobserved mode only for s = 2 (real);
        # the frequency sweep cannot reach real s, but the distance is still
        # bounded by the smallest perturbation on the sweep.
        assert rep.delta <= np.sqrt(5.0)

    def test_refinement_never_worse_than_grid(self, rng):
        for _ in range(5):
            A = rng.standard_normal((4, 4))
            C = rng.standard_normal((2, 4))
            rep = cm.distance_to_unobservability(A, C, n_grid=300)
            assert rep.delta <= np.min(rep.profile[:, 1]) + 1e-15

    def test_profile_shape_and_range(self):
        A = np.array([[0.0, 1.0], [-1.0, -1.0]])
        C = np.array([[1.0, 0.0]])
        rep = cm.distance_to_unobservability(A, C, n_grid=150)
        assert rep.profile.shape == (150, 2)
        assert rep.profile[0, 0] == 0.0
        assert rep.profile[-1, 0] == pytest.approx(default_w_max(A))

    def test_bad_args(self):
        with pytest.raises(ValueError):
            cm.distance_to_unobservability(np.eye(2), np.eye(2), w_max=-1.0)
        with pytest.raises(ValueError):
            cm.distance_to_unobservability(np.eye(2), np.eye(2), n_grid=10)


class TestSufficiency:
    def test_verdict(self):
        rep = cm.distance_to_unobservability(np.array([[0.0]]), np.array([[1.0]]),
                                             w_max=5.0, n_grid=200)
        assert cm.check_sufficiency(rep, 0.5)
        assert not cm.check_sufficiency(rep, 1.5)
        with pytest.raises(ValueError):
            cm.check_sufficiency(rep, -0.1)


def tiny_extended():
    """A small calibrated stacked system for synthesis unit tests."""
    plant = cm.LtiPlant(A=np.array([[0.0, 1.0], [-2.0, -3.0]]),
                        B=np.array([[0.0], [1.0]]),
                        C=np.array([[1.0, 0.0], [0.0, 1.0]]))
    mask = ChaoticMask(Phi=np.array([[0.0, -1.0], [1.0, -0.5]]),
                       phi=PolynomialMap(2, 2, ((), ((-0.05, (0, 2)),))),
                       Lambda=np.array([[1.0, 0.0], [0.0, 1.0]]),
                       sigma=np.array([2.0, 2.0]))
    cm.estimate_lipschitz(mask, grid_per_axis=5)
    mask.d_bound = 2.0
    return cm.build_extended(plant, mask)


class TestVerifyLmi:
    def test_margin_matches_direct_eigenvalue(self, ext_scaled, gain):
        m = cm.verify_lmi(ext_scaled, gain.P, gain.N)
        A, C, P, N = ext_scaled.Abold, ext_scaled.Cbold, gain.P, gain.N
        upper = P @ A + A.T @ P - N @ C - C.T @ N.T + _error_weight(ext_scaled)
        upper = 0.5 * (upper + upper.T)
        block = np.block([[upper, P], [P, -(ext_scaled.ell ** -2) * np.eye(ext_scaled.n)]])
        assert m == pytest.approx(np.max(np.linalg.eigvalsh(block)))

    def test_non_pd_p_rejected(self, ext_scaled, gain):
        with pytest.raises(ValueError):
            cm.verify_lmi(ext_scaled, -np.eye(ext_scaled.n), gain.N)


class TestSynthesizeGain:
    def test_tiny_system_certifies(self):
        ext = tiny_extended()
        gain = cm.synthesize_gain(ext)
        assert gain.margin < 0
        assert cm.is_hurwitz(ext.Abold - gain.L @ ext.Cbold)

    def test_case_study_certifies(self, gain, ext_scaled):
        assert gain.margin < 0
        assert gain.ell_used == pytest.approx(ext_scaled.ell)
        assert cm.verify_lmi(ext_scaled, gain.P, gain.N) == pytest.approx(gain.margin)

    def test_infeasible_reports_best_margin(self):
        # An absurdly large Lipschitz constant defeats every grid point.
        ext = tiny_extended()
        ext.mask.ell = 1e6
        with pytest.raises(InfeasibleSynthesisError):
            cm.synthesize_gain(ext)


class TestVerifyGain:
    def test_roundtrip_on_synthesized_gain(self, ext_scaled, gain):
        again = cm.verify_gain(ext_scaled, gain.L)
        assert again.margin < 0
        assert np.allclose(again.L, gain.L)

    def test_published_case_study_gain_certifies(self, ext_scaled):
        # The case study's reported extended gain also certifies against our
        # independently estimated box and Lipschitz constant.
        L = np.array([[-147.5759, 192.5241], [-83.7116, 107.5186],
                      [-31.3697, 4.5360], [-10.1254, 6.4027],
                      [-25.5599, 17.7149], [-8.3158, 2.4874],
                      [175.7012, -197.6720]])
        g = cm.verify_gain(ext_scaled, L)
        assert g.margin < 0
        assert cm.is_hurwitz(ext_scaled.Abold - L @ ext_scaled.Cbold)

    def test_destabilizing_gain_rejected(self, ext_scaled):
        bad = -10.0 * np.ones((ext_scaled.n, ext_scaled.Cbold.shape[0]))
        with pytest.raises(GainNotCertifiedError):
            cm.verify_gain(ext_scaled, bad)


class TestObserverGain:
    def test_validation(self, gain):
        with pytest.raises(ValueError, match="negative"):
            ObserverGain(L=gain.L, P=gain.P, N=gain.N, margin=0.1,
                         ell_used=gain.ell_used)
        with pytest.raises(ValueError, match="N must equal"):
            ObserverGain(L=gain.L, P=gain.P, N=gain.N + 1.0, margin=-1.0,
                         ell_used=gain.ell_used)
