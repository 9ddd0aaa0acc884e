import matplotlib.pyplot as plt

groups = [[2.1, 2.9, 3.4, 3.9, 4.6], [1.2, 2.2, 2.8, 3.3, 4.0]]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.boxplot(groups, patch_artist=True)  #1
ax.set_xticklabels(["control", "treated"])
