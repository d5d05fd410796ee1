"""Service for Dirichlet eigenvalues, the psi/phi/f_n fields and supersolution certificates."""
import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy import sparse, stats
from scipy.ndimage import distance_transform_edt
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu
from skimage import measure

from thinlab.config import THINLAB_EIGEN_MAX_ITER, THINLAB_PSI_MARGIN
from thinlab.errors import EigenConvergenceError
from thinlab.models.field import CertificateReport, EigenMethod, EigenResult, PhiDiagnostics, ScalarField
from thinlab.models.geometry import Point2, RasterSet
from thinlab.models.sampling import RngSpec
from thinlab.services.brownian_service import BrownianService, step_count
from thinlab.services.geometry_service import PlaneGeometryService

_SHIFTS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def neighbour_grids(grid: np.ndarray, fill: float) -> dict[tuple[int, int], np.ndarray]:
    """Neighbour values of every cell for the four axis shifts (row, col), padding with fill."""
    padded = np.pad(grid, 1, constant_values=fill)
    ny, nx = grid.shape
    return {(dr, dc): padded[1 + dr:1 + dr + ny, 1 + dc:1 + dc + nx] for dr, dc in _SHIFTS}


def grid_laplacian(values: ScalarField, exterior: float) -> np.ndarray:
    """5-point Laplacian at the occupied cells, with the given exterior value."""
    h = values.domain.h
    grid = values.to_grid(exterior)
    nb = neighbour_grids(grid, exterior)
    lap = (sum(nb.values()) - 4.0 * grid) / (h * h)
    return lap[values.domain.occupancy]


def grid_gradient_sq(values: ScalarField, exterior: float) -> np.ndarray:
    """Squared central-difference gradient at the occupied cells."""
    h = values.domain.h
    grid = values.to_grid(exterior)
    nb = neighbour_grids(grid, exterior)
    gy = (nb[(1, 0)] - nb[(-1, 0)]) / (2 * h)
    gx = (nb[(0, 1)] - nb[(0, -1)]) / (2 * h)
    return (gx * gx + gy * gy)[values.domain.occupancy]


def interior_mask(domain: RasterSet) -> np.ndarray:
    """Occupied cells whose four neighbours are occupied, in occupied-cell order."""
    nb = neighbour_grids(domain.occupancy.astype(float), 0.0)
    full = np.logical_and.reduce([v > 0.5 for v in nb.values()])
    return full[domain.occupancy]


class DirichletService:
    """Finite-difference Dirichlet problems on raster domains (exterior cells deleted)."""

    def __init__(self, geometry_service: Optional[PlaneGeometryService] = None,
                 brownian_service: Optional[BrownianService] = None) -> None:
        self.geometry_service = geometry_service or PlaneGeometryService()
        self.brownian_service = brownian_service or BrownianService(self.geometry_service)

    # noinspection PyMethodMayBeStatic
    def laplacian(self, domain: RasterSet) -> tuple[sparse.csr_matrix, np.ndarray]:
        """Assemble A = -Delta_h on the occupied cells with Dirichlet deletion.

        Args:
            domain: Raster domain

        Returns:
            tuple: (A as CSR, number of exterior neighbours per cell)
        """
        occ = domain.occupancy
        n = domain.count
        h2 = domain.h ** 2
        index = np.full(occ.shape, -1, dtype=np.int64)
        index[occ] = np.arange(n)
        centre = np.arange(n)
        rows, cols, vals = [centre], [centre], [np.full(n, 4.0 / h2)]
        exterior = np.zeros(n)
        for shifted in neighbour_grids(index, -1).values():
            nb = shifted[occ]
            has = nb >= 0
            rows.append(centre[has])
            cols.append(nb[has])
            vals.append(np.full(int(has.sum()), -1.0 / h2))
            exterior += ~has
        matrix = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        return matrix, exterior

    # noinspection PyMethodMayBeStatic
    def _ground_state(self, matrix: sparse.csr_matrix, tol: float, max_iter: int) -> tuple[float, np.ndarray, int]:
        """Smallest eigenpair of an SPD matrix by inverse iteration on its LU factors."""
        n = matrix.shape[0]
        lu = splu(matrix.tocsc())
        v = np.ones(n) / math.sqrt(n)
        lam = float(v @ (matrix @ v))
        change = math.inf
        for iteration in range(1, max_iter + 1):
            w = lu.solve(v)
            v = w / np.linalg.norm(w)
            lam_new = float(v @ (matrix @ v))
            change = abs(lam_new - lam) / abs(lam_new)
            lam = lam_new
            if change < tol:
                return lam, v, iteration
        # stalled (clustered spectrum): shift-invert Lanczos on the same factors
        logging.debug(f"DirichletService._ground_state: inverse iteration stalled at change {change:.2e}; using Lanczos")
        op_inv = LinearOperator(shape=matrix.shape, matvec=lu.solve, dtype=float)
        try:
            values, vectors = eigsh(matrix, k=1, sigma=0.0, which="LM", OPinv=op_inv, v0=v, tol=tol,
                                    maxiter=max_iter)
        except ArpackNoConvergence:
            raise EigenConvergenceError(change, max_iter)
        return float(values[0]), vectors[:, 0], max_iter

    def lambda1_grid(self, domain: RasterSet, tol: float = 1e-10,
                     max_iter: int = THINLAB_EIGEN_MAX_ITER) -> EigenResult:
        """First Dirichlet eigenvalue of the 5-point Laplacian, minimized over 4-connected components.

        Args:
            domain: Nonempty bounded raster domain
            tol: Relative eigenvalue change that ends the iteration
            max_iter: Iteration cap

        Returns:
            EigenResult: lambda1, per-component eigenvalues and the positive eigenfunction (max 1 per component)
        """
        if domain.is_empty():
            raise ValueError("empty domain")
        matrix, _ = self.laplacian(domain)
        labels = measure.label(domain.occupancy, connectivity=1)[domain.occupancy]
        eigenvector = np.zeros(domain.count)
        components = []
        for label in range(1, int(labels.max()) + 1):
            cells = np.flatnonzero(labels == label)
            sub = matrix[cells][:, cells]
            lam, vec, iterations = self._ground_state(sub, tol, max_iter)
            vec = vec * np.sign(vec.sum())
            eigenvector[cells] = vec / vec.max()
            components.append(lam)
            logging.debug(f"DirichletService.lambda1_grid: component {label} ({len(cells)} cells) "
                          f"lambda={lam:.6f} after {iterations} iterations")
        lambda1 = min(components)
        logging.info(f"DirichletService.lambda1_grid: lambda1={lambda1:.6f} h={domain.h:.5g} "
                     f"components={len(components)}")
        return EigenResult(lambda1=lambda1, method=EigenMethod.GRID, h=domain.h, components=tuple(components),
                           eigenfunction=ScalarField(domain, eigenvector))

    def lambda1_stochastic(self, rng: RngSpec, domain: RasterSet, x0s: Sequence[Point2],
                           t_grid: Sequence[float], n: int, dt: float, n_resamples: int = 199) -> EigenResult:
        """Decay rate of Brownian survival, fitted over the tail half of t_grid, with a bootstrap CI.

        Args:
            rng: Random stream
            domain: Raster domain with an exterior
            x0s: Start points inside the domain (n paths each, survival pooled)
            t_grid: Increasing times spanning at least a factor 4
            n: Paths per start point
            dt: Time step
            n_resamples: Bootstrap resamples

        Returns:
            EigenResult: Stochastic estimate with a 95% confidence interval
        """
        if domain.occupancy.all():
            raise ValueError("domain has no exterior")
        times = np.array(sorted(float(t) for t in t_grid))
        if len(times) < 2 or times[0] <= 0 or times[-1] < 4 * times[0]:
            raise ValueError("t_grid must span at least a factor 4")
        starts = np.array([p.as_array() for p in x0s]).reshape(-1, 2)
        if not domain.contains(starts).all():
            raise ValueError("start points must lie inside the domain")
        steps = np.array([step_count(t, dt) for t in times])
        last = self.brownian_service.exit_indices(rng, starts, n, domain, int(steps[-1]), dt).ravel()
        if np.sum(last >= steps[1]) == 0:
            raise ValueError("t_grid too coarse")
        tail = slice(len(times) // 2, None)

        def decay_rate(sample: np.ndarray) -> float:
            survival = np.array([np.mean(sample >= s) for s in steps[tail]])
            ok = survival > 0
            if ok.sum() < 2:
                return math.nan
            slope = stats.linregress(times[tail][ok], np.log(survival[ok])).slope
            return -float(slope)

        lambda1 = decay_rate(last)
        if not math.isfinite(lambda1):
            raise ValueError("t_grid too coarse")
        boot = stats.bootstrap((last,), decay_rate, n_resamples=n_resamples, vectorized=False,
                               method="percentile", random_state=rng.generator(len(times)))
        ci = (float(boot.confidence_interval.low), float(boot.confidence_interval.high))
        logging.info(f"DirichletService.lambda1_stochastic: lambda1={lambda1:.4f} CI=({ci[0]:.4f}, {ci[1]:.4f})")
        return EigenResult(lambda1=lambda1, method=EigenMethod.STOCHASTIC, h=domain.h,
                           components=(lambda1,), ci=ci)

    def solve_psi(self, domain: RasterSet, lam: float, margin: Optional[float] = None,
                  lambda1: Optional[float] = None) -> ScalarField:
        """Solve (Delta + lam) psi = 0 with exterior value 1.

        Args:
            domain: Raster domain
            lam: Rate, below lambda1 * (1 - margin)
            margin: Relative distance required below lambda1 (default THINLAB_PSI_MARGIN)
            lambda1: Precomputed first eigenvalue of the domain

        Returns:
            ScalarField: psi on the occupied cells
        """
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        if lam == 0:
            return ScalarField(domain, np.ones(domain.count))
        margin = THINLAB_PSI_MARGIN if margin is None else margin
        lambda1 = lambda1 if lambda1 is not None else self.lambda1_grid(domain).lambda1
        if lam >= lambda1 * (1 - margin):
            raise ValueError("sub-eigenvalue condition violated")
        matrix, exterior = self.laplacian(domain)
        system = (matrix - lam * sparse.identity(domain.count, format="csr")).tocsc()
        rhs = exterior / domain.h ** 2
        psi = splu(system).solve(rhs)
        residual = float(np.max(np.abs(system @ psi - rhs)))
        if residual > 1e-10 * float(np.max(rhs)):
            raise RuntimeError(f"psi solve residual {residual:.3e} above tolerance")
        logging.debug(f"DirichletService.solve_psi: lambda={lam} max psi={psi.max():.5g}")
        return ScalarField(domain, psi)

    # noinspection PyMethodMayBeStatic
    def phi_diagnostics(self, psi: ScalarField, lam: float, margin: float = 0.0) -> tuple[ScalarField, PhiDiagnostics]:
        """phi = -log psi and pointwise checks of Delta(phi) = lam + |grad phi|^2.

        The residual maximum runs over cells with four occupied neighbours whose distance
        to the exterior exceeds margin; the inequalities are checked on every cell with
        four occupied neighbours with tol = 100 h^2 max|Delta phi|.
        """
        if np.any(psi.values <= 0):
            raise ValueError("invalid psi")
        domain = psi.domain
        phi = ScalarField(domain, -np.log(psi.values))
        lap = grid_laplacian(phi, 0.0)
        grad_sq = grid_gradient_sq(phi, 0.0)
        interior = interior_mask(domain)
        distance = distance_transform_edt(np.pad(domain.occupancy, 1))[1:-1, 1:-1][domain.occupancy] * domain.h
        deep = interior & (distance > margin)
        residual = float(np.max(np.abs(lap - grad_sq - lam)[deep])) if deep.any() else 0.0
        tol = 100.0 * domain.h ** 2 * float(np.max(np.abs(lap[interior]))) if interior.any() else 0.0
        diagnostics = PhiDiagnostics(
            residual=residual,
            tol=tol,
            min_laplacian_excess=float(np.min(lap[interior] - lam)) if interior.any() else 0.0,
            max_gradient_excess=float(np.max(grad_sq[interior] - lap[interior])) if interior.any() else 0.0,
            cells_checked=int(interior.sum()),
        )
        if not diagnostics.inequalities_hold:
            logging.warning(f"DirichletService.phi_diagnostics: pointwise inequalities fail: {diagnostics}")
        return phi, diagnostics

    def phi_and_residual(self, psi: ScalarField, lam: float, margin: float = 0.0) -> tuple[ScalarField, float]:
        """phi = -log psi and the max interior residual |Delta(phi) - |grad phi|^2 - lam|."""
        phi, diagnostics = self.phi_diagnostics(psi, lam, margin)
        return phi, diagnostics.residual

    def build_fn(self, lambda_set: RasterSet, n: int, eps_search: Sequence[float],
                 headroom: float = 1.05) -> tuple[ScalarField, float]:
        """f_n = phi_{n^2, eps_n} / n on dilate(set, eps_n) for the largest qualifying eps_n.

        Args:
            lambda_set: Compact set
            n: Positive integer
            eps_search: Strictly decreasing dilation radii
            headroom: eps qualifies when lambda1(dilate(set, eps)) > headroom * n^2

        Returns:
            tuple: (f_n, eps_n)
        """
        if n < 1:
            raise ValueError("n must be positive")
        eps_list = [float(e) for e in eps_search]
        if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            raise ValueError("eps_search must be strictly decreasing")
        lam = float(n * n)
        for eps in eps_list:
            domain = self.geometry_service.dilate(lambda_set, eps)
            lambda1 = self.lambda1_grid(domain).lambda1
            logging.info(f"DirichletService.build_fn: n={n} eps={eps} lambda1={lambda1:.4f} "
                         f"threshold={headroom * lam:.4f}")
            if lambda1 > headroom * lam:
                psi = self.solve_psi(domain, lam, margin=0.5 * (1 - 1 / headroom), lambda1=lambda1)
                phi = ScalarField(domain, -np.log(psi.values))
                return ScalarField(domain, phi.values / n), eps
        raise ValueError("set not thin at this resolution/n")

    def certificate_report(self, domain: RasterSet, psi: ScalarField, lam: float,
                           eigen: Optional[EigenResult] = None, rtol: float = 1e-9) -> CertificateReport:
        """Discrete supersolution check -Delta_h psi >= lam psi with zero exterior.

        With the grid eigenfunction chi of the domain (eigenvalue lambda_k on component k),
        the discrete Green identity reads sum chi (A psi) = sum psi (A chi) = sum_k lambda_k chi psi.
        The report carries its relative residual, computed from A psi and the eigenvalues, and the
        implied gap min_k chi.A psi / chi.psi - lam, which is at least 0 whenever psi is certified.

        Args:
            domain: Raster domain
            psi: Candidate supersolution on the domain
            lam: Claimed lower bound for lambda1
            eigen: lambda1_grid result for the same domain
            rtol: Relative slack on the pointwise inequality

        Returns:
            CertificateReport: Verdict, smallest ratio A psi / psi and the Green-identity figures
        """
        if not psi.domain.same_grid(domain) or not np.array_equal(psi.domain.occupancy, domain.occupancy):
            raise ValueError("psi is not defined on this domain")
        matrix, _ = self.laplacian(domain)
        values = psi.values
        positive = bool(np.all(values > 0))
        applied = matrix @ values
        if positive:
            ratios = applied / values
            min_ratio = float(np.min(ratios))
            certified = min_ratio >= lam - rtol * max(abs(lam), 1.0)
        else:
            min_ratio, certified = -math.inf, False
        green_residual = implied_gap = None
        if eigen is not None and eigen.eigenfunction is not None:
            if not np.array_equal(eigen.eigenfunction.domain.occupancy, domain.occupancy):
                raise ValueError("eigenfunction is not defined on this domain")
            labels = measure.label(domain.occupancy, connectivity=1)[domain.occupancy]
            if int(labels.max()) != len(eigen.components):
                raise ValueError("eigen result does not match the components of this domain")
            chi = eigen.eigenfunction.values
            eigenvalues = np.asarray(eigen.components)[labels - 1]
            chi_a_psi = float(chi @ applied)
            psi_a_chi = float(np.sum(eigenvalues * chi * values))
            green_residual = abs(chi_a_psi - psi_a_chi) / max(abs(psi_a_chi), 1e-300)
            ratios_by_component = []
            for label in range(1, len(eigen.components) + 1):
                cells = labels == label
                chi_psi = float(chi[cells] @ values[cells])
                if chi_psi != 0:
                    ratios_by_component.append(float(chi[cells] @ applied[cells]) / chi_psi)
            if ratios_by_component:
                implied_gap = min(ratios_by_component) - lam
        logging.info(f"DirichletService.certificate_report: lambda={lam} certified={certified} "
                     f"min ratio={min_ratio:.5g} green residual={green_residual} implied gap={implied_gap}")
        return CertificateReport(certified=certified, lam=lam, positive=positive, min_ratio=min_ratio,
                                 green_residual=green_residual, implied_gap=implied_gap, cells=domain.count)

    def certify_lower_bound(self, domain: RasterSet, psi: ScalarField, lam: float,
                            eigen: Optional[EigenResult] = None) -> bool:
        """True iff psi > 0 and -Delta psi >= lam psi on every cell (exterior 0), so lambda1 >= lam.

        The Green-identity residual against the grid eigenfunction is logged with the verdict;
        eigen defaults to lambda1_grid(domain).
        """
        eigen = eigen if eigen is not None else self.lambda1_grid(domain)
        return self.certificate_report(domain, psi, lam, eigen).certified

    def certify_from_fn(self, f: ScalarField, lam: float) -> CertificateReport:
        """Certificate from psi = exp(-f) on the cells where Delta f >= 2 lam and Delta f >= 2 |grad f|^2."""
        lap = grid_laplacian(f, 0.0)
        grad_sq = grid_gradient_sq(f, 0.0)
        keep = (lap >= 2 * lam) & (lap >= 2 * grad_sq)
        if not keep.any():
            return CertificateReport(certified=False, lam=lam, positive=False, min_ratio=-math.inf)
        mask = np.zeros(f.domain.occupancy.shape, dtype=bool)
        mask[f.domain.occupancy] = keep
        sub = f.domain.with_occupancy(mask)
        psi = ScalarField(sub, np.exp(-f.values[keep]))
        return self.certificate_report(sub, psi, lam)

    def eigen_sweep(self, lambda_set: RasterSet, eps_schedule: Sequence[float]) -> list[tuple[float, EigenResult]]:
        """lambda1 of dilate(set, eps) for each eps of the schedule."""
        results = []
        for eps in eps_schedule:
            result = self.lambda1_grid(self.geometry_service.dilate(lambda_set, float(eps)))
            results.append((float(eps), result))
        return results
