"""Readers and writers for the artifact formats the gates inspect."""

from .cif import (CifBlock, CifDocument, CifParseError, PatchRecord,
                  REQUIRED_CIF_TAGS, get_item, missing_required_tags,
                  parse_cif, patch_item, serialize_cif)
from .checkcif import (CheckCifAlert, CheckCifReport, parse_checkcif_report,
                       write_checkcif_report)
from .config import (ConfigParseError, ConfigTypeError, ReductionConfig,
                     parse_config, serialize_config)
from .hkl import HklParseError, parse_hklf2, write_hklf2
from .shelxl import (ShelxlParseError, ShelxlSummary, parse_shelxl_output,
                     write_shelxl_output)
from .ubfile import UbFileError, read_ub, write_ub

__all__ = [
    "CifBlock", "CifDocument", "CifParseError", "PatchRecord",
    "REQUIRED_CIF_TAGS", "get_item", "missing_required_tags", "parse_cif",
    "patch_item", "serialize_cif",
    "CheckCifAlert", "CheckCifReport", "parse_checkcif_report",
    "write_checkcif_report",
    "ConfigParseError", "ConfigTypeError", "ReductionConfig", "parse_config",
    "serialize_config",
    "HklParseError", "parse_hklf2", "write_hklf2",
    "ShelxlParseError", "ShelxlSummary", "parse_shelxl_output",
    "write_shelxl_output",
    "UbFileError", "read_ub", "write_ub",
]
