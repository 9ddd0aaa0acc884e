import matplotlib.pyplot as plt

quarters = ["Q1", "Q2", "Q3", "Q4", "Q5"]
revenue = [3.1, 4.5, 2.2, 5.0, 3.8]

fig, ax = plt.subplots(figsize=(3.2, 2.4))
ax.bar(quarters, revenue, color="#4c72b0")  #1
ax.set_ylabel("Revenue (M$)")
ax.set_title("Quarterly revenue")
plt.show()
