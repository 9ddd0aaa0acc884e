import matplotlib.pyplot as plt

samples = [[5, 6, 7, 8, 10], [3, 5, 6, 6, 9], [4, 4, 5, 7, 8]]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.boxplot(samples, patch_artist=True, medianprops={"color": "black"})  #1
