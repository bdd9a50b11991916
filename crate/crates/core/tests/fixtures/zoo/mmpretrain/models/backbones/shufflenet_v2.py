from mmengine.model import BaseModule


class InvertedResidual(BaseModule):
    def __init__(self, in_channels, out_channels, stride=1, conv_cfg=None,
                 norm_cfg=dict(type='BN'), act_cfg=dict(type='ReLU'), with_cp=False,
                 init_cfg=None):
        super().__init__(init_cfg)

    def forward(self, x):
        out = self.branch2(x)
        return channel_shuffle(out, 2)
