"""
Generate a synthetic dynamic spectral scene
"""
from ...exceptions import ConfigError
from ...sci_components.cube_store import export_pseudo_rgb, save_cube
from ...sci_components.synth import crop_video, random_scene_spec, synth_scene
from ..base import RunOutcome, SCICommand, load_scene_spec, require


def _pair(value):
    if value is None:
        return None
    try:
        first, second = (int(part) for part in value.split(','))
    except ValueError:
        raise ConfigError(f"expected 'row,col', got {value!r}") from None
    return first, second


class Command(SCICommand):
    help = 'Render a scene spec (or a seeded random one), optionally crop it into a moving-window video'

    def add_arguments(self, parser):
        parser.add_argument('--spec', help='scene spec (JSON)')
        parser.add_argument('--frames', type=int, default=3)
        parser.add_argument('--height', type=int, default=64)
        parser.add_argument('--width', type=int, default=64)
        parser.add_argument('--channels', type=int, default=16)
        parser.add_argument('--objects', type=int, default=3)
        parser.add_argument('--max-displacement', type=int, default=2)
        parser.add_argument('--background-texture', type=float, default=0.0,
                            help='seeded static background grain in [0, 1]')
        parser.add_argument('--seed', type=int, default=0)

        group = parser.add_argument_group('cropping')
        group.add_argument('--crop', help="output window 'height,width'")
        group.add_argument('--crop-step', help="per-frame offset 'row,col'; drawn from the seed when omitted")
        group.add_argument('--crop-origin', help="top-left corner 'row,col' of the first window")
        group.add_argument('--crop-frames', type=int)
        group.add_argument('--zero-probability', type=float, default=0.7)

        parser.add_argument('--out', help='cube output (SCUB)')
        parser.add_argument('--rgb', help='pseudo-RGB PNG of frame 0')

    def run(self, options):
        require(options, 'out')
        if options.get('spec'):
            spec = load_scene_spec(options['spec'])
        else:
            spec = random_scene_spec(
                options['frames'], options['height'], options['width'], options['channels'],
                n_objects=options['objects'], seed=options['seed'], max_displacement=options['max_displacement'],
                background_texture=options['background_texture'],
            )
        cube = synth_scene(spec)

        if options.get('crop'):
            out_h, out_w = _pair(options['crop'])
            cube = crop_video(
                cube, out_h, out_w,
                step=_pair(options.get('crop_step')),
                seed=options['seed'],
                frames=options.get('crop_frames'),
                origin=_pair(options.get('crop_origin')),
                zero_probability=options['zero_probability'],
            )

        save_cube(cube, options['out'])
        outputs = {'cube': options['out']}
        if options.get('rgb'):
            export_pseudo_rgb(cube, 0, options['rgb'])
            outputs['rgb'] = options['rgb']
        self.say(f"🎨 Scene {cube.shape} with {len(spec.objects)} objects -> {options['out']}")
        return RunOutcome(outputs=outputs, inputs={'spec': options.get('spec') or ''}, seed=options['seed'])
