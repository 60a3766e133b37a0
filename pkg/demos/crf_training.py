"""Training a log-linear pairwise CRF on classifier probabilities.

The CRF scores class c at pixel i by w1[c] . P(y_i | x_i) and every edge
label pair (a, b) by a shared weight W2[a, b]. Training maximizes the
likelihood of the observed training labels with the unlabeled pixels
marginalized out (loopy BP supplies the marginals); prediction takes the
per-pixel max of the sum-product marginals.

Run:  python3 demos/crf_training.py
"""

import numpy as np

from hsiugm.classifiers import predict_proba, train_lr
from hsiugm.crf import CrfTrainConfig, crf_predict, train_crf
from hsiugm.data import LabelMap, SceneSpec, sample_split, synth_scene
from hsiugm.energy import grid_graph
from hsiugm.evaluation import confusion, metrics
from hsiugm.features import FeatureCube

layout = (np.arange(16) % 4 + 1).reshape(4, 4)
means = np.zeros((4, 6))
for c in range(4):
    means[c, c] = 1.0
    means[c, (c + 1) % 6] = 0.5
scene = SceneSpec(height=48, width=48, layout=layout, means=means, sigma=0.6)

cube, truth = synth_scene(scene, seed=0)
split = sample_split(truth, 40, 40, seed=0)
feats = FeatureCube(cube.values)
proba = predict_proba(train_lr(feats, split, lam=0.01), feats)

pixelwise = LabelMap((np.argmax(proba.values, axis=2) + 1).astype(np.int64))
print(f"pixel-wise LR: OA "
      f"{100 * metrics(confusion(pixelwise, truth, split)).overall_accuracy:.2f}")

# observed labels: training pixels carry their class, everything else is 0
graph = grid_graph(48, 48)
features = proba.values.reshape(-1, 4)
observed = np.zeros(graph.n_nodes, dtype=np.int64)
observed[split.train[:, 0]] = split.train[:, 1]

cfg = CrfTrainConfig(objective="mle_bp", l2=0.01, max_iters=10, inference="bp")
model = train_crf(features, graph, observed, cfg)
print("learned pairwise weights (diagonal = same-label affinity):")
print(np.array2string(model.pairwise_weights, precision=3, suppress_small=True))

labeling, marginals = crf_predict(model, features, graph)
crf_map = LabelMap(labeling.reshape(48, 48))
print(f"CRF max-of-marginals: OA "
      f"{100 * metrics(confusion(crf_map, truth, split)).overall_accuracy:.2f} "
      f"(BP converged: {marginals.converged})")
