import numpy as np
import matplotlib.pyplot as plt

theta = np.linspace(0.0, 2 * np.pi, 6, endpoint=False)
count = [2.0, 3.2, 1.5, 2.8, 2.2, 3.6]

fig = plt.figure(figsize=(3.0, 3.0))
ax = fig.add_subplot(projection="polar")
ax.bar(theta, count, width=0.8, color="goldenrod", alpha=0.9)  #1
