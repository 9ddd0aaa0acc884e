import numpy as np
import matplotlib.pyplot as plt

theta = np.linspace(0, 2 * np.pi, 9)[:-1]
radius = [1.0, 1.8, 1.2, 2.4, 1.6, 2.0, 1.1, 2.2]

fig = plt.figure(figsize=(3.0, 3.0))
ax = fig.add_subplot(projection="polar")
ax.plot(theta, radius, marker="o", linestyle="None", color="teal")  #1
ax.set_rmax(2.6)
