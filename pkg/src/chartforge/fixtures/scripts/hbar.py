import matplotlib.pyplot as plt

langs = ["Go", "Rust", "Python", "Java"]
share = [12, 9, 31, 17]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.barh(langs, share, color="seagreen")  #1
ax.set_xlabel("Share (%)")
fig.tight_layout()
