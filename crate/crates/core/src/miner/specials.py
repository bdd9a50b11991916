class NAS_Backbone(nn.Module):
    """Runs the modules built from ``layer_cfgs`` one after another."""

    def __init__(self, layer_cfgs):
        super().__init__()
        self.layers = nn.ModuleList([MODELS.build(cfg) for cfg in layer_cfgs])

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

class SequentialWithConfig(nn.Module):
    """Sequential container whose children are given as config dicts."""

    def __init__(self, module_cfgs):
        super().__init__()
        self.blocks = nn.Sequential(*[MODELS.build(cfg) for cfg in module_cfgs])

    def forward(self, x):
        return self.blocks(x)

class ParallelWithConfig(nn.Module):
    """Feeds the input to two branches and merges their outputs.

    ``merge_operation`` is one of 'add', 'mul' or 'concat'; ``concat_dim``
    is only used by 'concat'.
    """

    def __init__(self, module_cfg1, module_cfg2, merge_operation='add', concat_dim=1):
        super().__init__()
        assert merge_operation in ('add', 'mul', 'concat')
        self.branch1 = MODELS.build(module_cfg1)
        self.branch2 = MODELS.build(module_cfg2)
        self.merge_operation = merge_operation
        self.concat_dim = concat_dim

    def forward(self, x):
        y1 = self.branch1(x)
        y2 = self.branch2(x)
        if self.merge_operation == 'add':
            out = y1 + y2
        elif self.merge_operation == 'mul':
            out = y1 * y2
        else:
            out = torch.cat([y1, y2], dim=self.concat_dim)
        return out

class MyReshape(nn.Module):
    """Reshapes the batch to ``(batch_size, *shape)``."""

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x):
        return x.reshape(x.shape[0], *self.shape)

class Identity(nn.Module):
    """Returns its input unchanged."""

    def __init__(self):
        super().__init__()

    def forward(self, x):
        return x
