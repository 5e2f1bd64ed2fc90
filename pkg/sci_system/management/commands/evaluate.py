"""
Score reconstructions against ground truth
"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd
from django.conf import settings

from ...exceptions import ConfigError
from ...serializers import MetricReportSerializer
from ...sci_components.metrics import evaluate
from ...sci_pipeline import SCIPipeline
from ..base import RunOutcome, SCICommand, load_existing_cube, require, write_json

GT_SUFFIX = '.gt.scub'
BATCH_COLUMNS = ['scene', 'method', 'psnr', 'ssim', 'sam', 'temporal']


def find_batch_pairs(directory: Path):
    """
    (scene, method, recon path, gt path) for every `<scene>.<method>.scub`
    that sits next to a `<scene>.gt.scub`
    """
    pairs = []
    for gt_path in sorted(directory.glob(f'*{GT_SUFFIX}')):
        scene = gt_path.name[:-len(GT_SUFFIX)]
        for recon_path in sorted(directory.glob(f'{scene}.*.scub')):
            if recon_path == gt_path:
                continue
            method = recon_path.name[len(scene) + 1:-len('.scub')]
            if '.' in method:
                continue
            pairs.append((scene, method, recon_path, gt_path))
    return pairs


class Command(SCICommand):
    help = 'Compute PSNR, SSIM, SAM and the temporal score of a reconstruction'

    def add_arguments(self, parser):
        parser.add_argument('--recon', help='reconstruction (SCUB)')
        parser.add_argument('--gt', help='ground truth (SCUB)')
        parser.add_argument('--batch-dir', help='directory of <scene>.gt.scub / <scene>.<method>.scub files')
        parser.add_argument('--out', help='report output: JSON, or CSV in batch mode')

    def run(self, options):
        require(options, 'out')
        if options.get('batch_dir'):
            return self._run_batch(options)
        require(options, 'recon', 'gt')
        recon = load_existing_cube(options['recon'])
        gt = load_existing_cube(options['gt'])
        report = SCIPipeline(verbose=self.verbosity > 1).evaluate(recon, gt)
        payload = MetricReportSerializer(report.to_dict()).data
        write_json(options['out'], payload)
        self.say(
            f"📊 PSNR {report.psnr_db:.3f} dB | SSIM {report.ssim:.4f} | "
            f"SAM {report.sam_deg:.3f}° | temporal {report.temporal_score}"
        )
        return RunOutcome(outputs={'report': options['out']},
                          inputs={'recon': options['recon'], 'gt': options['gt']})

    def _run_batch(self, options):
        directory = Path(options['batch_dir'])
        if not directory.is_dir():
            raise FileNotFoundError(f"batch directory not found: {directory}")
        pairs = find_batch_pairs(directory)
        if not pairs:
            raise ConfigError(f"no <scene>.gt.scub / <scene>.<method>.scub pairs in {directory}")

        def score(pair):
            scene, method, recon_path, gt_path = pair
            report = evaluate(load_existing_cube(recon_path), load_existing_cube(gt_path))
            return {
                'scene': scene,
                'method': method,
                'psnr': report.psnr_db,
                'ssim': report.ssim,
                'sam': report.sam_deg,
                'temporal': report.temporal_score,
            }

        with ThreadPoolExecutor(max_workers=settings.SCI_NUM_THREADS or None) as pool:
            rows = list(pool.map(score, pairs))
        pd.DataFrame(rows, columns=BATCH_COLUMNS).to_csv(options['out'], index=False)
        self.say(f"📊 Scored {len(rows)} reconstructions from {directory}")
        return RunOutcome(outputs={'table': options['out']}, inputs={'batch_dir': str(directory)})
