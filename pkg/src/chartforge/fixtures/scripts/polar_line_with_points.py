import numpy as np
import matplotlib.pyplot as plt

angle = np.linspace(0, 2 * np.pi, 7)
speed = [2.0, 2.6, 1.8, 3.0, 2.2, 2.8, 2.0]

fig = plt.figure(figsize=(3.0, 3.0))
ax = fig.add_subplot(projection="polar")
ax.plot(angle, speed, marker="D", linestyle="-", color="purple", markersize=4)  #1
