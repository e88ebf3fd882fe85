from .checkpoint import load_checkpoint, save_checkpoint
from .idx import encode_idx, load_idx, parse_idx
from .render import write_pgm, write_svg_curves, write_svg_heatmap
from .tables import write_csv

__all__ = ["load_checkpoint", "save_checkpoint", "encode_idx", "load_idx", "parse_idx",
           "write_pgm", "write_svg_curves", "write_svg_heatmap", "write_csv"]
