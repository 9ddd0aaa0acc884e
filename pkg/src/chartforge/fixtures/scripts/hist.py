import numpy as np
import matplotlib.pyplot as plt

latency = np.random.normal(5.0, 1.5, 120)

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.hist(latency, bins=6, color="slateblue", edgecolor="white")  #1
ax.set_xlabel("Latency (ms)")
ax.set_ylabel("Count")
