import matplotlib.pyplot as plt

share = [35, 25, 20, 12, 8]
name = ["A", "B", "C", "D", "E"]

fig, ax = plt.subplots(figsize=(3.0, 3.0))
ax.pie(share, labels=name, startangle=90)  #1
