from .model import MOIRAModel
