"""DCT 系数特征 vs LeNet：MNIST 实验库。"""
