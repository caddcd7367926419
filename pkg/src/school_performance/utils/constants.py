"""Constants to be used throughout the school-performance package."""
import school_performance
from importlib import resources as pkg_resources

PKG_PATH = pkg_resources.files(school_performance)

# external microdata schema
SCHOOL_ID_COLUMN = "ID_ESCOLA"
TARGET_COLUMN = "PROFICIENCIA_MT"
LABEL_COLUMN = "ALVO_CLASSIFICACAO"
DEFAULT_DELIMITER = ";"
DEFAULT_MISSING_MARKERS = frozenset({".", "*"})

# socioeconomic questionnaire columns. Q02, Q04, Q05a, Q06 & Q09 are known
# predictors, the rest fill the 11-column selection.
DEFAULT_FEATURE_COLUMNS = (
    "TX_RESP_Q01",
    "TX_RESP_Q02",
    "TX_RESP_Q04",
    "TX_RESP_Q05a",
    "TX_RESP_Q06",
    "TX_RESP_Q07",
    "TX_RESP_Q08",
    "TX_RESP_Q09",
    "TX_RESP_Q10",
    "TX_RESP_Q11",
    "TX_RESP_Q12",
)
# category counts per default column, 54 in total once one-hot encoded
DEFAULT_CATEGORY_COUNTS = (3, 6, 8, 8, 7, 4, 4, 3, 3, 4, 4)

CLASS_NAMES = ("Below Average", "Above Average")
PROCESSED_FILENAME = "dados_processados.csv"
