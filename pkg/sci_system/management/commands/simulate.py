"""
Encode a spectral video through one SCI architecture
"""
from ...sci_components.cube_store import save_mask, save_measurement, save_measurement_preview
from ...sci_pipeline import SCIPipeline
from ..base import (
    RunOutcome,
    SCICommand,
    add_scene_arguments,
    add_system_arguments,
    load_scene,
    require,
    system_serializer,
)


class Command(SCICommand):
    help = 'Forward-encode a scene cube (SCUB or scene spec) into an SMES measurement'

    def add_arguments(self, parser):
        add_scene_arguments(parser)
        add_system_arguments(parser)
        parser.add_argument('--seed', type=int, default=0, help='noise seed')
        parser.add_argument('--out', help='measurement output (SMES)')
        parser.add_argument('--mask-out', help='also store the mask used (SCUB)')
        parser.add_argument('--preview', help='PNG of the first measurement frame')

    def run(self, options):
        require(options, 'out')
        cube = load_scene(options)
        system = system_serializer(options).build(cube.height, cube.width, cube.wavelengths)
        meas = SCIPipeline(verbose=self.verbosity > 1).simulate(cube, system, seed=options['seed'])

        save_measurement(meas, options['out'])
        outputs = {'measurement': options['out']}
        if options.get('mask_out'):
            save_mask(system.mask, options['mask_out'])
            outputs['mask'] = options['mask_out']
        if options.get('preview'):
            save_measurement_preview([meas], options['preview'])
            outputs['preview'] = options['preview']

        self.say(f"📷 {system.architecture.value}: {cube.shape} -> {meas.shape}")
        inputs = {'scene': options.get('scene') or options.get('scene_spec') or ''}
        return RunOutcome(outputs=outputs, inputs=inputs, seed=options['seed'])
