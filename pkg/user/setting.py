# 不带参数运行 cli.py 时执行的命令
# argv = ["figures", "--which", "basis"]

argv = ["bench", "--n", "32"]

# recon：重建用的阈值扫描，自选的一组
recon_taus = [0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2]

# counts：非零系数个数 vs 阈值（对数刻度）
counts_taus = [0.0] + [round(10 ** (k / 10), 6) for k in range(-40, 11)]

# dctgrid 展示的数字个数，basis 展示的基图像个数
dctgrid_count = 12
basis_count = 16

# kernels：卷积响应图使用的数字
kernel_digit = 3
