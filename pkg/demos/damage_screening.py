"""Screen a blade for damage by comparing it with its own baseline.

Two synthetic blades are rendered: the intact one and a copy carrying a tip
mass of 5% of the blade mass, the stand-in for damage used here.  The
extra mass lowers every natural frequency by the same Rayleigh factor while
leaving the mode shapes alone.  The pipeline is run on both videos and the
paired modes are compared: a frequency shift beyond 0.6 Hz or a MAC below
0.85 flags damage.

The same pipeline is available from the shell:

    phasevib synth beam --out runs/base
    phasevib synth beam --tip-mass 0.05 --out runs/damaged
    phasevib report --baseline runs/base/pipeline.json \\
                    --test runs/damaged/pipeline.json --out runs/report

    python demos/damage_screening.py
"""
import math

from phasevib import (BandpassSpec, BeamSceneConfig, FeatureSet, GaborParams, RoiSpec,
                      cantilever_beam_video, detect_damage, estimate_motion, extract_shape,
                      magnify_video, pick_peaks, spectrum)

PARAMS = GaborParams(16.0, theta=math.pi / 2)
ALPHAS = (25, 40, 80, 120)


def features(cfg):
    video, _ = cantilever_beam_video(cfg)
    tip = int(cfg.root_px + 0.97 * cfg.length_px)
    edge = int(cfg.height / 2 - cfg.thickness_px / 2)
    sig = estimate_motion(video, PARAMS, RoiSpec([(tip, edge), (tip - 6, edge)]))
    peaks = pick_peaks(spectrum(sig, None))
    shapes = []
    for peak, alpha in zip(peaks, ALPHAS):
        mag = magnify_video(video, PARAMS, BandpassSpec(peak.frequency, 3.0, alpha))
        shapes.append(extract_shape(mag.video, cfg.length_m, frequency=peak.frequency))
    return FeatureSet([p.frequency for p in peaks[:len(shapes)]], shapes)


def main():
    baseline = features(BeamSceneConfig())
    loaded = features(BeamSceneConfig(tip_mass_fraction=0.05))
    report = detect_damage(baseline, loaded)
    print(report.to_text())

    # a reference table of intact vs mass-loaded frequencies
    table = detect_damage(FeatureSet([5.85, 15.63, 37.11, 60.55]),
                          FeatureSet([3.90, 13.67, 33.20, 58.59]))
    print("reference frequency table:")
    print(table.to_text())


if __name__ == "__main__":
    main()
