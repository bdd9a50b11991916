from torch import nn
from mmengine.model import BaseModule


class Base(BaseModule):
    def __init__(self, num_classes=10, loss=None, scale=+2.5, flag=True):
        super().__init__()
        self.fc = nn.Linear(8, num_classes)

    def forward(self, x, activate=True, norm=True):
        return self.fc(x)


class Head(torch.nn.Module):
    def __init__(self, in_channels, topk=(1, 5)):
        super().__init__()
        self.topk = topk

    def forward(self, *inputs):
        return sum(inputs)


class Silent(Module):
    def forward(self, x):
        self.cache = x
        return


class Unknown(SomethingElse):
    def forward(self, x):
        return x


class Mixin:
    pass


class ConvBlock(nn.Module):
    def __init__(self, c):
        super().__init__()

    def forward(self, x):
        return (x,)
