"""
Compare the four SCI architectures on one scene
"""
from pathlib import Path

from ...sci_components.cube_store import save_cube, save_measurement_preview
from ...sci_pipeline import SCIPipeline
from ..base import RunOutcome, SCICommand, add_scene_arguments, add_solver_arguments, load_scene, require, solver_config


class Command(SCICommand):
    help = 'Simulate, reconstruct (gap-tv) and evaluate every architecture; writes a comparison CSV'

    def add_arguments(self, parser):
        add_scene_arguments(parser)
        add_solver_arguments(parser)
        parser.add_argument('--seed', type=int, default=0, help='noise seed')
        parser.add_argument('--mask-seed', type=int, default=0)
        parser.add_argument('--noise-sigma', type=float, default=0.0)
        parser.add_argument('--step', type=int, help='dispersion step in pixels per channel')
        parser.add_argument('--out', help='comparison table (CSV)')

    def run(self, options):
        require(options, 'out')
        cube = load_scene(options)
        solver = solver_config(options)
        comparison = SCIPipeline(verbose=self.verbosity > 1).compare_systems(
            cube,
            solver=solver,
            seed=options['seed'],
            mask_seed=options['mask_seed'],
            noise_sigma=options['noise_sigma'],
            step=options.get('step'),
        )

        out = Path(options['out'])
        stem = out.with_suffix('')
        comparison.table.to_csv(out, index=False)
        preview_path = f"{stem}_measurements.png"
        save_measurement_preview(comparison.measurements.values(), preview_path)
        outputs = {'table': str(out), 'preview': preview_path}
        for architecture, recon in comparison.reconstructions.items():
            cube_path = f"{stem}_{architecture}.scub"
            save_cube(recon, cube_path)
            outputs[architecture] = cube_path

        self.say(comparison.table.to_string(index=False))
        inputs = {'scene': options.get('scene') or options.get('scene_spec') or ''}
        return RunOutcome(outputs=outputs, inputs=inputs, seed=options['seed'])
