from torch import nn


class Mlp(nn.Module):
    def __init__(self, in_features, hidden_features=None, out_features=None, act_layer=nn.GELU,
                 norm_layer=None, bias=True, drop=0.0, use_conv=False):
        super().__init__()

    def forward(self, x):
        x = self.fc1(x)
        x = self.act(x)
        x = self.fc2(x)
        return x


class ConvMlp(BaseModule):
    def __init__(self, in_features, hidden_features=None, out_features=None,
                 act_cfg=dict(type='ReLU'), norm_cfg=None, drop=0.0, init_cfg=None):
        super().__init__(init_cfg)

    def forward(self, x):
        x = self.fc1(x)
        x = self.norm(x)
        x = self.act(x)
        x = self.drop(x)
        x = self.fc2(x)
        return x
