#!/usr/bin/env python3
"""
Test script to verify the SCI toolkit installation
"""
import os
import sys
import django
from pathlib import Path

# Add the project directory to Python path
project_dir = Path(__file__).parent
sys.path.insert(0, str(project_dir))

# Setup Django
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'specvid.settings')
django.setup()

PACKAGES = [
    ('numpy', 'NumPy'),
    ('pandas', 'pandas'),
    ('scipy', 'SciPy'),
    ('skimage', 'scikit-image'),
    ('PIL', 'Pillow'),
    ('einops', 'einops'),
    ('torch', 'PyTorch'),
    ('tqdm', 'tqdm'),
    ('rest_framework', 'Django REST framework'),
]

def test_imports():
    """Test if all required packages can be imported"""
    print("🔄 Testing imports...")

    for module, label in PACKAGES:
        try:
            __import__(module)
            print(f"✅ {label} imported successfully")
        except ImportError as e:
            print(f"❌ {label} import failed: {e}")
            return False

    return True

def test_run_records():
    """Test the RunRecord model"""
    print("🔄 Testing run records...")

    try:
        from sci_system.models import RunRecord

        record = RunRecord.objects.create(command='installation-check', seed=0)
        record.manifest = {'command': 'installation-check'}
        record.save()
        print("✅ RunRecord model test passed")

        record.delete()
        return True

    except Exception as e:
        print(f"❌ Run record test failed: {e}")
        print("   Did you run: python manage.py migrate ?")
        return False

def test_sci_components():
    """Run each component once on a tiny problem"""
    print("🔄 Testing SCI components...")

    try:
        import numpy as np
        from sci_system.sci_components.attention import AttentionConfig
        from sci_system.sci_components.flops import flops_cdpa, instrumented_flops_cdpa
        from sci_system.sci_components.metrics import evaluate
        from sci_system.sci_components.optics import Architecture, build_system, forward
        from sci_system.sci_components.pgsvrt import build_pgsvrt, pgsvrt_forward
        from sci_system.sci_components.solver import SolverConfig, gap_tv
        from sci_system.sci_components.synth import random_scene_spec, synth_scene

        cube = synth_scene(random_scene_spec(2, 16, 16, 4, seed=0))
        print(f"✅ Synthetic scene {cube.shape}")

        for architecture in Architecture:
            system = build_system(architecture, 16, 16, wavelengths=cube.wavelengths)
            meas = forward(cube, system)
            recon = gap_tv(meas, system, SolverConfig(iterations=3))
            report = evaluate(recon, cube)
            print(f"✅ {architecture.value}: {meas.shape} -> PSNR {report.psnr_db:.2f} dB")

        system = build_system('DD-CASSI', 16, 16, wavelengths=cube.wavelengths)
        network = build_pgsvrt(system, 2, depth=(1, 1, 1), h_win=8, w_win=8, n_bridged=16)
        output = pgsvrt_forward(forward(cube, system), system, network)
        if not np.all((output.values >= 0.0) & (output.values <= 1.0)):
            print("❌ PG-SVRT output left [0, 1]")
            return False
        print(f"✅ PG-SVRT forward {output.shape}")

        config = AttentionConfig(30, 3, 256, 256, 8, 32, 64, heads=1)
        if instrumented_flops_cdpa(config) != flops_cdpa(config):
            print("❌ Instrumented MAC counts differ from the closed form")
            return False
        print("✅ MAC accounting matches the closed form")

        return True

    except Exception as e:
        print(f"❌ SCI component test failed: {e}")
        return False

def test_settings():
    """Test Django settings"""
    print("🔄 Testing Django settings...")

    try:
        from django.conf import settings

        required_settings = [
            'SCI_NUM_THREADS',
            'SCI_WAVELENGTH_MIN',
            'SCI_WAVELENGTH_MAX',
            'SCI_SOLVER_ITERATIONS',
            'SCI_WINDOW_HEIGHT',
            'SCI_WINDOW_WIDTH',
            'SCI_BRIDGED_TOKENS',
            'SCI_PSNR_CAP',
        ]

        for setting in required_settings:
            if hasattr(settings, setting):
                print(f"✅ {setting} = {getattr(settings, setting)}")
            else:
                print(f"❌ {setting} is missing")
                return False

        return True

    except Exception as e:
        print(f"❌ Settings test failed: {e}")
        return False

def main():
    """Main test function"""
    print("🧪 Testing SCI Toolkit Installation")
    print("=" * 50)

    tests = [
        ("Package Imports", test_imports),
        ("Django Settings", test_settings),
        ("Run Records", test_run_records),
        ("SCI Components", test_sci_components),
    ]

    passed = 0
    total = len(tests)

    for test_name, test_func in tests:
        print(f"\n📋 Running {test_name} test...")
        if test_func():
            passed += 1
        else:
            print(f"❌ {test_name} test failed")

    print("\n" + "=" * 50)
    print(f"📊 Test Results: {passed}/{total} tests passed")

    if passed == total:
        print("🎉 All tests passed! The toolkit is ready to use.")
        print("\nNext steps:")
        print("1. Run: python manage.py test sci_system")
        print("2. Run: python manage.py compare_systems --scene-spec <spec.json> --out runs/compare.csv")
    else:
        print("❌ Some tests failed. Please check the errors above.")
        sys.exit(1)

if __name__ == "__main__":
    main()
