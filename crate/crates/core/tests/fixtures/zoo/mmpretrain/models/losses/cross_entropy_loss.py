import torch.nn as nn


class CrossEntropyLoss(nn.Module):
    def __init__(self, use_sigmoid=False, use_soft=False, reduction='mean', loss_weight=1.0,
                 class_weight=None, pos_weight=None):
        super().__init__()

    def forward(self, cls_score, label, weight=None, avg_factor=None, reduction_override=None, **kwargs):
        loss_cls = self.loss_weight * self.cls_criterion(cls_score, label, weight)
        return loss_cls
