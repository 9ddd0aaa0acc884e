import matplotlib.pyplot as plt

dose = [1, 2, 3, 4, 5]
response = [2.4, 3.1, 3.9, 4.2, 5.0]
err = [0.3, 0.5, 0.4, 0.6, 0.35]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.errorbar(dose, response, yerr=err, fmt="o", capsize=4, color="black", ecolor="gray")  #1
ax.set_xlabel("Dose")
