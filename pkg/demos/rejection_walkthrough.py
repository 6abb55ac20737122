"""How the rejection threshold is chosen and applied.

    python demos/rejection_walkthrough.py
"""

from lava.rejection import CalibrationRecord, calibrate_threshold, decide

# training-set confidences and whether the head was right
records = [CalibrationRecord(c, ok) for c, ok in [
    (0.99, True), (0.95, True), (0.90, False), (0.85, True), (0.80, True), (0.70, False)]]

for target in (0.85, 0.75, 1.0):
    th = calibrate_threshold(records, target, "ADA")
    print(f"target {target:.2f}: tau = {th.tau_string()}, accepts {th.accepted_fraction:.0%} "
          f"of training samples at accuracy {th.accepted_accuracy:.2f}")

th = calibrate_threshold(records, 0.85, "ADA")
vocab = ("ASV", "FoR", "Codec")
for probs in ([0.02, 0.01, 0.97], [0.40, 0.35, 0.25]):
    p = decide(probs, vocab, th.tau)
    print(f"{probs} -> {p.label} (raw {p.raw_label}, confidence {p.confidence:.2f})")

# nothing reaches the target: the sentinel rejects everything
bad = calibrate_threshold([CalibrationRecord(0.9, False)], 0.85)
print("all-wrong calibration:", bad.tau_string(), decide([0.1, 0.1, 0.8], vocab, bad.tau).label)
