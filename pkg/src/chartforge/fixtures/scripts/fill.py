import matplotlib.pyplot as plt

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.fill([0.0, 1.0, 2.0, 1.0], [0.0, 1.4, 0.6, -0.4],
        [2.5, 3.5, 4.5, 3.5], [0.0, 1.2, 0.2, -0.8], color="olive", alpha=0.8)  #1
ax.set_xlim(-0.5, 5.0)
