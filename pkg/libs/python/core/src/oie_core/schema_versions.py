CORPUS_FORMAT_VERSION = 1
EXTRACTION_RECORD_VERSION = 1
RUN_LOG_VERSION = 1
CACHE_LAYOUT_VERSION = 1
