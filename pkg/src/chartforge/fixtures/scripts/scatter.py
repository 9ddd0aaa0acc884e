import matplotlib.pyplot as plt

width = [1.0, 2.1, 3.3, 4.0, 5.2, 6.1]
height = [2.2, 1.1, 3.0, 2.4, 3.9, 1.8]
weight = [30, 55, 42, 75, 38, 60]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.scatter(width, height, s=weight, c=height, cmap="viridis")  #1
ax.set_xlabel("width")
ax.set_ylabel("height")
