import matplotlib.pyplot as plt

year = [2019, 2020, 2021, 2022, 2023]
web = [10, 12, 15, 18, 21]
mobile = [5, 9, 14, 16, 20]
api = [2, 3, 5, 8, 12]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.stackplot(year, web, mobile, api, colors=["#a6cee3", "#1f78b4", "#b2df8a"])  #1
ax.set_ylabel("Requests (k)")
