import matplotlib.pyplot as plt

trials = [
    [1.1, 1.9, 2.4, 2.8, 3.5, 4.0],
    [2.0, 2.7, 3.1, 3.8, 4.4, 5.2],
    [0.8, 1.5, 2.0, 2.3, 2.9, 3.3],
]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.boxplot(trials, patch_artist=True, widths=0.5)  #1
ax.set_xticklabels(["a", "b", "c"])
