import matplotlib.pyplot as plt

day = [0, 1, 2, 3, 4, 5]
cpu = [12, 35, 28, 44, 39, 51]
mem = [22, 24, 27, 25, 30, 33]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.plot(day, cpu, marker="s", linestyle="-", color="crimson", label="cpu")  #1
ax.plot(day, mem, marker="^", linestyle="--", color="navy", label="mem")  #2
ax.set_ylabel("Usage (%)")
ax.legend(loc="upper left", fontsize=7)
