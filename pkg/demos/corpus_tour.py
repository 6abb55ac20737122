"""Tour of the synthetic corpus: generate a few clips, preprocess one, look at its latent.

    python demos/corpus_tour.py [out_dir]
"""

import sys
from collections import Counter
from pathlib import Path

import numpy as np

from lava.autoencoder import Autoencoder, encode
from lava.corpus import default_spec, preprocess, synth_corpus

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_corpus")
res = synth_corpus(default_spec(train=6, val=2, test=2, real_test=2, unseen_test=2), out)
print(f"wrote {len(res.entries)} manifest entries and {len(res.holdout)} held-out clips to {out}")
print("per source:", dict(Counter(Path(e.path).parts[1] for e in res.entries)))

# one clip from the coarsest codec model: at most 8 distinct levels survive on disk
clip = next(e for e in res.entries if e.model == "F06")
w = preprocess(out / clip.path)
print(f"{clip.path}: {w.samples.shape[0]} samples, peak {np.abs(w.samples).max():.3f}, "
      f"{np.unique(w.samples).size} distinct values")

# band limits show up as an empty spectrum above the cutoff
for source in ("ASV", "FoR", "F01"):
    e = next(e for e in res.entries if Path(e.path).parts[1] == source)
    x = preprocess(out / e.path).samples
    spec = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, 1 / 16000)
    high = spec[freqs > 3500].sum() / spec.sum()
    print(f"{source}: {high:.1%} of energy above 3.5 kHz")

z = encode(w, Autoencoder(seed=0).store)
print("latent shape:", z.shape)
