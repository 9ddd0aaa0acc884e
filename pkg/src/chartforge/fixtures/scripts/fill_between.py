import numpy as np
import matplotlib.pyplot as plt

x = np.linspace(0, 4, 50)
mid = np.sin(x) + 2
spread = 0.4 + 0.1 * np.cos(2 * x)

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.fill_between(x, mid - spread, mid + spread, color="lightsteelblue")  #1
ax.plot(x, mid, color="royalblue", linewidth=1)
