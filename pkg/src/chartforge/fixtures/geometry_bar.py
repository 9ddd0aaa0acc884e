import matplotlib.pyplot as plt

fig = plt.figure(figsize=(4.0, 3.0))
ax = fig.add_axes([0.1, 0.1, 0.8, 0.8])
ax.set_xlim(0.0, 10.0)
ax.set_ylim(0.0, 8.0)
ax.bar([4.0], [5.0], width=2.0, align="center", color="navy")  #1
