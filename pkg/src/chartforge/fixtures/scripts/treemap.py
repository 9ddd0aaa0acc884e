import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

cells = [
    (0.00, 0.0, 0.45, 1.00, "#66c2a5"),
    (0.45, 0.5, 0.55, 0.50, "#fc8d62"),
    (0.45, 0.0, 0.30, 0.50, "#8da0cb"),
    (0.75, 0.0, 0.25, 0.50, "#e78ac3"),
]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
for x, y, w, h, color in cells:
    ax.add_patch(Rectangle((x, y), w, h, facecolor=color, edgecolor="white"))  #1
ax.set_xlim(0, 1)
ax.set_ylim(0, 1)
ax.set_axis_off()
