def is_empty(value):
    if value is None:
        return True
    return len(value) == 0
