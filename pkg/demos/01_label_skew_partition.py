"""
Label-skewed client data
========================

Build a synthetic pool, hand two classes to each of ten clients and look at
what every client ends up holding.
"""

import numpy as np

from copfl.data import PartitionSpec, class_overlap, gen_synthetic, partition

spec = PartitionSpec(num_clients=10, classes_per_client=2, train_bound=50,
                     test_bound=100, num_classes=10, seed=0)

# each class is shared by N*s/C clients, each needing M + M_test samples
per_class = spec.assignments_per_class() * (spec.train_bound + spec.test_bound)
pool = gen_synthetic(10, 20, per_class, seed=[0, 0], noise_scale=1.2, mean_rank=3)
print("pool:", pool.inputs.shape, "labels", np.bincount(pool.labels))

clients = partition(pool, spec)
for i, cd in enumerate(clients):
    print(f"client {i}  classes {sorted(cd.class_set)}  train {len(cd.train)}  test {len(cd.test)}")

# how many clients see each class
print("class -> clients:", class_overlap(clients))

# true class means span 3 of the 20 input dims; sample means add a little noise
means = np.stack([pool.inputs[pool.labels == c].mean(axis=0) for c in range(10)])
print("singular values of the class means:", np.round(np.linalg.svd(means, compute_uv=False), 2))
