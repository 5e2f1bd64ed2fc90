"""
Main SCI Pipeline Service
"""
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd
import torch
from django.conf import settings

from .exceptions import ConfigError
from .sci_components.cube import MeasurementSequence, SpectralCube
from .sci_components.flops import FlopReport
from .sci_components.metrics import MetricReport, evaluate
from .sci_components.optics import Architecture, SystemConfig, build_system, forward
from .sci_components.pgsvrt import PGSVRT, build_pgsvrt, pgsvrt_forward
from .sci_components.solver import SolverConfig, SolverTrace, back_project, gap_tv
import logging

logger = logging.getLogger(__name__)

METHODS = ('gap-tv', 'back-projection', 'pgsvrt')
COMPARISON_COLUMNS = ['architecture', 'measurement_width', 'psnr', 'ssim', 'sam', 'temporal']


@dataclass
class Reconstruction:
    """A reconstructed cube plus whatever the method reports about itself"""

    cube: SpectralCube
    method: str
    trace: Optional[SolverTrace] = None
    flop_reports: List[FlopReport] = field(default_factory=list)
    network: Optional[PGSVRT] = None


@dataclass
class Comparison:
    table: pd.DataFrame
    measurements: Dict[str, MeasurementSequence]
    reconstructions: Dict[str, SpectralCube]


class SCIPipeline:
    """Simulate, reconstruct and evaluate spectral video through the SCI systems"""

    def __init__(self, verbose: bool = True):
        self.verbose = verbose
        if settings.SCI_NUM_THREADS:
            torch.set_num_threads(settings.SCI_NUM_THREADS)
        self._say(f"🚀 SCI Pipeline ready (toolkit {settings.SCI_TOOLKIT_VERSION}, torch threads {torch.get_num_threads()})")

    def _say(self, message: str) -> None:
        if self.verbose:
            print(message)

    def simulate(self, cube: SpectralCube, system: SystemConfig, seed: int = 0) -> MeasurementSequence:
        """
        Encode a spectral video through one system

        Args:
            cube: Scene to encode
            system: Encoding system
            seed: Noise seed

        Returns:
            MeasurementSequence
        """
        self._say(f"\n📷 Encoding {cube.shape} through {system.architecture.value}...")
        start_time = time.time()
        meas = forward(cube, system, seed=seed)
        self._say(f"✅ Measurement {meas.shape} ready in {time.time() - start_time:.3f}s")
        return meas

    def reconstruct(
        self,
        meas: MeasurementSequence,
        system: SystemConfig,
        method: str = 'gap-tv',
        solver: Optional[SolverConfig] = None,
        network_options: Optional[Dict[str, Any]] = None,
        network_seed: int = 0,
        network: Optional[PGSVRT] = None,
        ground_truth: Optional[SpectralCube] = None,
    ) -> Reconstruction:
        """
        Reconstruct a cube with one of the supported methods

        Args:
            meas: Measurement sequence
            system: System the measurement came from
            method: gap-tv, back-projection or pgsvrt
            solver: GAP-TV parameters
            network_options: PGSVRT construction options (depth, heads, window, ...)
            network_seed: Weight seed when no network is given
            network: Prebuilt network (e.g. from a weight bundle)
            ground_truth: Optional reference for the GAP-TV trace

        Returns:
            Reconstruction
        """
        if method not in METHODS:
            raise ConfigError(f"unknown reconstruction method {method!r}; expected one of {', '.join(METHODS)}")
        self._say(f"\n🔁 Reconstructing {meas.shape} with {method}...")
        start_time = time.time()

        if method == 'back-projection':
            result = Reconstruction(back_project(meas, system), method)
        elif method == 'gap-tv':
            trace = SolverTrace()
            solver = solver or SolverConfig()
            cube = gap_tv(meas, system, solver, ground_truth=ground_truth, trace=trace, verbose=self.verbose)
            self._say(f"📉 Residual {trace.residuals[0]:.4e} -> {trace.residuals[-1]:.4e} over {solver.iterations} iterations")
            result = Reconstruction(cube, method, trace=trace)
        else:
            if network is None:
                network = build_pgsvrt(system, meas.frames, seed=network_seed, **(network_options or {}))
            reports: List[FlopReport] = []
            cube = pgsvrt_forward(meas, system, network, flop_reports=reports)
            self._say(f"🧮 {len(reports)} CDPB blocks, {sum(r.total_macs for r in reports):,} attention MACs")
            result = Reconstruction(cube, method, flop_reports=reports, network=network)

        self._say(f"✅ Reconstruction completed in {time.time() - start_time:.3f}s")
        return result

    def evaluate(self, recon: SpectralCube, gt: SpectralCube) -> MetricReport:
        self._say(f"\n📊 Evaluating {recon.shape}...")
        start_time = time.time()
        report = evaluate(recon, gt)
        self._say(
            f"✅ PSNR {report.psnr_db:.2f} dB, SSIM {report.ssim:.4f}, SAM {report.sam_deg:.2f}°, "
            f"temporal {report.temporal_score} ({time.time() - start_time:.3f}s)"
        )
        return report

    def compare_systems(
        self,
        cube: SpectralCube,
        solver: Optional[SolverConfig] = None,
        seed: int = 0,
        mask_seed: int = 0,
        noise_sigma: float = 0.0,
        step: Optional[int] = None,
    ) -> Comparison:
        """
        Run every architecture on one scene: simulate -> GAP-TV -> evaluate

        Returns:
            Comparison with one table row per architecture
        """
        self._say(f"\n{'='*60}")
        self._say(f"🔬 STARTING SYSTEM COMPARISON")
        self._say(f"📐 Scene: {cube.shape}")
        self._say(f"{'='*60}")
        comparison_start = time.time()

        rows = []
        measurements = {}
        reconstructions = {}
        for index, architecture in enumerate(Architecture, start=1):
            self._say(f"\n🏗️ STEP {index}: {architecture.value}")
            step_start = time.time()
            system = build_system(
                architecture,
                cube.height,
                cube.width,
                wavelengths=cube.wavelengths,
                seed=mask_seed,
                step=step,
                noise_sigma=noise_sigma,
            )
            meas = self.simulate(cube, system, seed=seed)
            recon = self.reconstruct(meas, system, 'gap-tv', solver=solver).cube
            report = self.evaluate(recon, cube)
            rows.append({
                'architecture': architecture.value,
                'measurement_width': meas.width_prime,
                'psnr': report.psnr_db,
                'ssim': report.ssim,
                'sam': report.sam_deg,
                'temporal': report.temporal_score,
            })
            measurements[architecture.value] = meas
            reconstructions[architecture.value] = recon
            self._say(f"⏱️ {architecture.value} done in {time.time() - step_start:.3f}s")

        table = pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
        total_time = time.time() - comparison_start
        self._say(f"\n{'='*60}")
        self._say(f"🎉 SYSTEM COMPARISON COMPLETED")
        self._say(f"⏱️ Total time: {total_time:.3f}s")
        self._say(table.to_string(index=False))
        self._say(f"{'='*60}")
        logger.info(f"Compared {len(rows)} architectures on {cube.shape} in {total_time:.3f}s")
        return Comparison(table, measurements, reconstructions)
