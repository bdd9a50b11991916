import torch.nn as nn


class ConvNorm(nn.Module):
    def __init__(self, in_chs, out_chs, kernel_size=1, stride=1, padding=0, bias=False):
        super().__init__()

    def forward(self, x):
        return self.bn(self.conv(x))
