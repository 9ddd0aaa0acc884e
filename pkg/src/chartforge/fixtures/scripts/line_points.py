import matplotlib.pyplot as plt

month = [1, 2, 3, 4, 5, 6, 7]
temp = [3.1, 4.0, 7.8, 12.2, 16.9, 20.4, 22.8]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.plot(month, temp, marker="o", color="tab:orange")  #1
ax.set_xlabel("Month")
ax.set_ylabel("Temp (C)")
